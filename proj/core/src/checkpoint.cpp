#include "fprune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fprune {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  void record(const Writer& inner) {
    u32(static_cast<std::uint32_t>(inner.buf_.size()));
    buf_.append(inner.buf_);
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return std::string(take(u32())); }
  Reader record() { return Reader(take(u32())); }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw CheckpointError(Kind::truncated, "checkpoint is truncated");
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

void put_conv(Writer& w, const ConvSpec& c) {
  for (auto v : {c.in_channels, c.out_channels, c.kernel_h, c.kernel_w, c.stride, c.pad}) w.u64(v);
}

ConvSpec get_conv(Reader& r) {
  ConvSpec c;
  c.in_channels = r.u64();
  c.out_channels = r.u64();
  c.kernel_h = r.u64();
  c.kernel_w = r.u64();
  c.stride = r.u64();
  c.pad = r.u64();
  return c;
}

void require_consumed(const Reader& r, const char* what) {
  if (!r.done()) {
    throw CheckpointError(Kind::integrity, std::string(what) + " record has " +
                                               std::to_string(r.remaining()) + " trailing bytes");
  }
}

}  // namespace

std::string encode_checkpoint(const ModelGraph& model) {
  Writer w;
  w.raw(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.u32(kCheckpointVersion);

  Writer meta;
  meta.str(model.meta.name);
  meta.u32(model.meta.version);
  meta.u64(model.meta.seed);
  meta.u32(static_cast<std::uint32_t>(model.meta.input_shape.size()));
  for (auto d : model.meta.input_shape) meta.u64(d);
  meta.u64(model.meta.num_classes);
  meta.u8(model.meta.coupled_residual ? 1 : 0);
  w.record(meta);

  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    Writer rec;
    rec.u8(static_cast<std::uint8_t>(l.kind));
    rec.u8(l.prunable ? 1 : 0);
    rec.u8(l.shortcut ? 1 : 0);
    put_conv(rec, l.conv);
    put_conv(rec, l.conv2);
    rec.u64(l.pool_h);
    rec.u64(l.pool_w);
    rec.u64(l.in_dim);
    rec.u64(l.out_dim);
    w.record(rec);
  }

  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params.params()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u64(d);
    w.u64(p.value.size());
    for (double v : p.value.data()) w.f64(v);
  }
  return std::move(w.bytes());
}

ModelGraph decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kCheckpointMagic ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError(Kind::not_a_checkpoint, "not a checkpoint (bad magic bytes)");
  }
  Reader r(bytes.substr(sizeof kCheckpointMagic));
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }

  ModelGraph m;
  {
    Reader meta = r.record();
    m.meta.name = meta.str();
    m.meta.version = meta.u32();
    m.meta.seed = meta.u64();
    const auto rank = meta.u32();
    if (rank > 8) throw CheckpointError(Kind::integrity, "implausible input rank");
    for (std::uint32_t i = 0; i < rank; ++i) m.meta.input_shape.push_back(meta.u64());
    m.meta.num_classes = meta.u64();
    m.meta.coupled_residual = meta.u8() != 0;
    require_consumed(meta, "metadata");
  }

  const auto layer_count = r.u32();
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    Reader rec = r.record();
    LayerSpec l;
    const auto kind = rec.u8();
    if (kind < 1 || kind > 6) {
      throw CheckpointError(Kind::integrity, "unknown layer kind " + std::to_string(kind));
    }
    l.kind = static_cast<LayerKind>(kind);
    l.prunable = rec.u8() != 0;
    l.shortcut = rec.u8() != 0;
    l.conv = get_conv(rec);
    l.conv2 = get_conv(rec);
    l.pool_h = rec.u64();
    l.pool_w = rec.u64();
    l.in_dim = rec.u64();
    l.out_dim = rec.u64();
    require_consumed(rec, "layer");
    m.layers.push_back(l);
  }

  const auto param_count = r.u32();
  for (std::uint32_t i = 0; i < param_count; ++i) {
    std::string name = r.str();
    const auto rank = r.u32();
    if (rank > 8) throw CheckpointError(Kind::integrity, "implausible rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u64());
    const auto count = r.u64();
    if (count != shape_size(shape)) {
      throw CheckpointError(Kind::integrity, "parameter '" + name + "' declares shape " +
                                                 shape_string(shape) + " but stores " +
                                                 std::to_string(count) + " values");
    }
    if (count > r.remaining() / 8) throw CheckpointError(Kind::truncated, "checkpoint is truncated");
    std::vector<double> data(count);
    for (auto& v : data) v = r.f64();
    if (m.params.contains(name)) {
      throw CheckpointError(Kind::integrity, "duplicate parameter '" + name + "'");
    }
    m.params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  require_consumed(r, "checkpoint");

  try {
    m.validate();
  } catch (const ShapeError& e) {
    throw CheckpointError(Kind::integrity, std::string("inconsistent checkpoint: ") + e.what());
  }
  return m;
}

std::string checkpoint_sidecar_json(const ModelGraph& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["name"] = model.meta.name;
  j["model_version"] = model.meta.version;
  j["seed"] = model.meta.seed;
  j["input_shape"] = model.meta.input_shape;
  j["num_classes"] = model.meta.num_classes;
  j["coupled_residual"] = model.meta.coupled_residual;
  auto conv_json = [](const ConvSpec& c) {
    return nlohmann::ordered_json{{"in_channels", c.in_channels}, {"out_channels", c.out_channels},
                                  {"kernel", {c.kernel_h, c.kernel_w}}, {"stride", c.stride},
                                  {"pad", c.pad}};
  };
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : model.layers) {
    nlohmann::ordered_json e{{"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv:
        e["conv"] = conv_json(l.conv);
        e["prunable"] = l.prunable;
        break;
      case LayerKind::residual:
        e["conv1"] = conv_json(l.conv);
        e["conv2"] = conv_json(l.conv2);
        e["shortcut"] = l.shortcut;
        e["prunable"] = l.prunable;
        break;
      case LayerKind::pool:
        e["window"] = {l.pool_h, l.pool_w};
        break;
      case LayerKind::fc:
        e["in_dim"] = l.in_dim;
        e["out_dim"] = l.out_dim;
        break;
      default:
        break;
    }
    layers.push_back(std::move(e));
  }
  auto& params = j["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : model.params.params()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  return j.dump(2) + "\n";
}

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(model);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::io, "cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(Kind::io, "failed writing '" + path.string() + "'");
  }
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw CheckpointError(Kind::io, "cannot write sidecar for '" + path.string() + "'");
  side << checkpoint_sidecar_json(model);
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace fprune
