#include "fprune/model.hpp"

#include <cmath>
#include <stdexcept>

#include "fprune/ops.hpp"

namespace fprune {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::fc: return "fc";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::residual: return "residual";
  }
  return "unknown";
}

LayerSpec LayerSpec::make_conv(ConvSpec spec, bool prunable) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.conv = spec;
  l.prunable = prunable;
  return l;
}

LayerSpec LayerSpec::make_pool(std::size_t h, std::size_t w) {
  LayerSpec l;
  l.kind = LayerKind::pool;
  l.pool_h = h;
  l.pool_w = w;
  return l;
}

LayerSpec LayerSpec::make_fc(std::size_t in_dim, std::size_t out_dim) {
  LayerSpec l;
  l.kind = LayerKind::fc;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  return l;
}

LayerSpec LayerSpec::make_relu() { return LayerSpec{}; }

LayerSpec LayerSpec::make_flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

LayerSpec LayerSpec::make_residual(std::size_t channels, std::size_t mid_channels,
                                   std::size_t kernel, bool prunable) {
  LayerSpec l;
  l.kind = LayerKind::residual;
  l.conv = ConvSpec{channels, mid_channels, kernel, kernel, 1, kernel / 2};
  l.conv2 = ConvSpec{mid_channels, channels, kernel, kernel, 1, kernel / 2};
  l.prunable = prunable;
  return l;
}

std::string ModelGraph::param_name(std::size_t layer, std::string_view role) {
  return "layer" + std::to_string(layer) + "." + std::string(role);
}

namespace {

[[noreturn]] void shape_fail(std::size_t layer, const std::string& what) {
  throw ShapeError("layer " + std::to_string(layer) + ": " + what);
}

Shape conv_out(std::size_t layer, const ConvSpec& c, const Shape& in) {
  if (in.size() != 3) shape_fail(layer, "conv expects a [C,H,W] input, got " + shape_string(in));
  if (in[0] != c.in_channels) {
    shape_fail(layer, "conv expects " + std::to_string(c.in_channels) + " input channels, got " +
                          std::to_string(in[0]));
  }
  if (c.out_channels == 0 || c.in_channels == 0) shape_fail(layer, "conv with zero channels");
  try {
    return {c.out_channels, conv_output_extent(in[1], c.kernel_h, c.stride, c.pad),
            conv_output_extent(in[2], c.kernel_w, c.stride, c.pad)};
  } catch (const ShapeError& e) {
    shape_fail(layer, e.what());
  }
}

void expect_param(const ParamStore& store, const std::string& name, const Shape& shape,
                  std::size_t& seen) {
  const Parameter* p = store.find(name);
  if (!p) throw ShapeError("missing parameter '" + name + "'");
  if (p->value.shape() != shape) {
    throw ShapeError("parameter '" + name + "' has shape " + shape_string(p->value.shape()) +
                     ", expected " + shape_string(shape));
  }
  ++seen;
}

Shape conv_weight_shape(const ConvSpec& c) {
  return {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w};
}

// Shared forward body. `param` maps a parameter name to a tape variable.
template <typename ParamFn>
Var run_forward(const ModelGraph& m, Tape& tape, Var x, ParamFn&& param,
                const ActivationHook* hook) {
  auto notify = [&](std::size_t i, HookPoint point, Var v) {
    if (hook && *hook) (*hook)(i, point, tape.mutable_value(v));
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        x = conv2d(x, param(ModelGraph::param_name(i, "weight")),
                   param(ModelGraph::param_name(i, "bias")), {l.conv.stride, l.conv.pad});
        break;
      case LayerKind::pool:
        x = max_pool2d(x, l.pool_h, l.pool_w);
        break;
      case LayerKind::fc:
        x = linear(x, param(ModelGraph::param_name(i, "weight")),
                   param(ModelGraph::param_name(i, "bias")));
        break;
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::flatten:
        x = flatten(x);
        break;
      case LayerKind::residual: {
        Var h = relu(conv2d(x, param(ModelGraph::param_name(i, "conv1.weight")),
                            param(ModelGraph::param_name(i, "conv1.bias")),
                            {l.conv.stride, l.conv.pad}));
        notify(i, HookPoint::block_inner, h);
        Var o = conv2d(h, param(ModelGraph::param_name(i, "conv2.weight")),
                       param(ModelGraph::param_name(i, "conv2.bias")),
                       {l.conv2.stride, l.conv2.pad});
        Var skip = x;
        if (l.shortcut) {
          Var sw = param(ModelGraph::param_name(i, "shortcut.weight"));
          Var zero_bias = tape.constant(Tensor({sw.value().dim(0)}));
          skip = conv2d(x, sw, zero_bias, {1, 0});
        }
        x = relu(add(o, skip));
        break;
      }
    }
    notify(i, HookPoint::layer_output, x);
  }
  return x;
}

}  // namespace

std::vector<Shape> ModelGraph::infer_shapes() const { return infer_shapes(meta.input_shape); }

std::vector<Shape> ModelGraph::infer_shapes(const Shape& input_shape) const {
  std::vector<Shape> out;
  out.reserve(layers.size());
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        cur = conv_out(i, l.conv, cur);
        break;
      case LayerKind::pool:
        if (cur.size() != 3) shape_fail(i, "pool expects [C,H,W], got " + shape_string(cur));
        if (l.pool_h == 0 || l.pool_w == 0 || cur[1] < l.pool_h || cur[2] < l.pool_w) {
          shape_fail(i, "pool window does not fit " + shape_string(cur));
        }
        cur = {cur[0], cur[1] / l.pool_h, cur[2] / l.pool_w};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::fc:
        if (cur.size() != 1 || cur[0] != l.in_dim) {
          shape_fail(i, "fc expects a flat input of " + std::to_string(l.in_dim) + ", got " +
                            shape_string(cur));
        }
        cur = {l.out_dim};
        break;
      case LayerKind::residual: {
        const Shape mid = conv_out(i, l.conv, cur);
        if (l.conv2.in_channels != l.conv.out_channels) {
          shape_fail(i, "residual inner widths disagree");
        }
        const Shape res = conv_out(i, l.conv2, mid);
        if (res[1] != cur[1] || res[2] != cur[2]) {
          shape_fail(i, "residual block changes the spatial extent");
        }
        if (!l.shortcut && res[0] != cur[0]) {
          shape_fail(i, "residual block without projection must keep its channel count");
        }
        cur = res;
        break;
      }
    }
    out.push_back(cur);
  }
  return out;
}

void ModelGraph::validate() const {
  if (meta.input_shape.size() != 3) {
    throw ShapeError("model input shape must be [C,H,W], got " + shape_string(meta.input_shape));
  }
  const auto shapes = infer_shapes();
  if (!layers.empty()) {
    const Shape& last = shapes.back();
    if (last.size() != 1 || last[0] != meta.num_classes) {
      throw ShapeError("model output " + shape_string(last) + " does not match " +
                       std::to_string(meta.num_classes) + " classes");
    }
  }
  std::size_t seen = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        expect_param(params, param_name(i, "weight"), conv_weight_shape(l.conv), seen);
        expect_param(params, param_name(i, "bias"), {l.conv.out_channels}, seen);
        break;
      case LayerKind::fc:
        expect_param(params, param_name(i, "weight"), {l.out_dim, l.in_dim}, seen);
        expect_param(params, param_name(i, "bias"), {l.out_dim}, seen);
        break;
      case LayerKind::residual:
        expect_param(params, param_name(i, "conv1.weight"), conv_weight_shape(l.conv), seen);
        expect_param(params, param_name(i, "conv1.bias"), {l.conv.out_channels}, seen);
        expect_param(params, param_name(i, "conv2.weight"), conv_weight_shape(l.conv2), seen);
        expect_param(params, param_name(i, "conv2.bias"), {l.conv2.out_channels}, seen);
        if (l.shortcut) {
          expect_param(params, param_name(i, "shortcut.weight"),
                       {l.conv2.out_channels, l.conv.in_channels, 1, 1}, seen);
        }
        break;
      default:
        break;
    }
  }
  if (seen != params.size()) {
    throw ShapeError("model carries " + std::to_string(params.size() - seen) +
                     " parameters not referenced by any layer");
  }
}

Var ModelGraph::forward(Tape& tape, Var input) {
  return run_forward(*this, tape, input,
                     [&](const std::string& name) { return tape.param(params.at(name)); }, nullptr);
}

Var ModelGraph::forward(Tape& tape, Var input, const ActivationHook& hook) const {
  return run_forward(
      *this, tape, input,
      [&](const std::string& name) { return tape.constant(params.at(name).value); }, &hook);
}

Tensor ModelGraph::logits(const Tensor& images, std::size_t batch_size) const {
  if (images.rank() != 4) throw ShapeError("logits expects [N,C,H,W] images");
  const std::size_t n = images.dim(0);
  const std::size_t per = images.size() / std::max<std::size_t>(n, 1);
  Tensor out({n, meta.num_classes});
  const ActivationHook none;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    std::vector<double> chunk(images.data().begin() + static_cast<long>(start * per),
                              images.data().begin() + static_cast<long>((start + count) * per));
    Tape tape(false);
    Var x = tape.constant(
        Tensor({count, images.dim(1), images.dim(2), images.dim(3)}, std::move(chunk)));
    const Tensor& z = forward(tape, x, none).value();
    std::copy(z.data().begin(), z.data().end(),
              out.data().begin() + static_cast<long>(start * meta.num_classes));
  }
  return out;
}

bool ModelGraph::is_prunable(const PruneTarget& t) const {
  if (t.layer >= layers.size()) return false;
  const LayerSpec& l = layers[t.layer];
  if (!l.prunable) return false;
  if (l.kind == LayerKind::conv) return t.slot == ConvSlot::first;
  if (l.kind == LayerKind::residual) return t.slot == ConvSlot::first || meta.coupled_residual;
  return false;
}

std::vector<PruneTarget> ModelGraph::prune_targets() const {
  std::vector<PruneTarget> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (auto slot : {ConvSlot::first, ConvSlot::second}) {
      if (is_prunable({i, slot})) out.push_back({i, slot});
    }
  }
  return out;
}

const ConvSpec& ModelGraph::target_conv(const PruneTarget& t) const {
  if (t.layer >= layers.size()) throw std::out_of_range("prune target layer out of range");
  const LayerSpec& l = layers[t.layer];
  if (l.kind == LayerKind::conv && t.slot == ConvSlot::first) return l.conv;
  if (l.kind == LayerKind::residual) return t.slot == ConvSlot::first ? l.conv : l.conv2;
  throw std::invalid_argument("layer " + std::to_string(t.layer) + " (" + to_string(l.kind) +
                              ") has no conv in that slot");
}

std::string ModelGraph::target_weight_name(const PruneTarget& t) const {
  const LayerSpec& l = layers.at(t.layer);
  if (l.kind == LayerKind::residual) {
    return param_name(t.layer, t.slot == ConvSlot::first ? "conv1.weight" : "conv2.weight");
  }
  return param_name(t.layer, "weight");
}

std::size_t ModelGraph::filter_count(const PruneTarget& t) const {
  return target_conv(t).out_channels;
}

std::size_t ModelGraph::total_prunable_filters() const {
  std::size_t n = 0;
  for (const auto& t : prune_targets()) n += filter_count(t);
  return n;
}

ModelGraph build_toy_cnn(const ToyCnnConfig& cfg) {
  if (cfg.input_shape.size() != 3) {
    throw ShapeError("input shape must be [C,H,W], got " + shape_string(cfg.input_shape));
  }
  if (cfg.residual && cfg.widths.size() < 2) {
    throw ShapeError("a residual network needs a stem conv plus at least one 2-conv block "
                     "(>= 2 widths)");
  }
  if (cfg.widths.size() < 2) throw ShapeError("toy CNN needs at least 2 conv layers");
  for (auto w : cfg.widths) {
    if (w < 2) throw ShapeError("every conv width must be >= 2");
  }
  if (cfg.num_classes < 2) throw ShapeError("need at least 2 classes");

  ModelGraph m;
  m.meta.name = cfg.name;
  m.meta.seed = cfg.seed;
  m.meta.input_shape = cfg.input_shape;
  m.meta.num_classes = cfg.num_classes;
  m.meta.coupled_residual = cfg.residual && cfg.coupled_residual;

  const std::size_t pad = cfg.kernel / 2;
  std::size_t channels = cfg.input_shape[0];
  std::size_t h = cfg.input_shape[1], w = cfg.input_shape[2];
  auto maybe_pool = [&] {
    if (h >= 2 && w >= 2) {
      m.layers.push_back(LayerSpec::make_pool(2, 2));
      h /= 2;
      w /= 2;
    }
  };

  if (!cfg.residual) {
    for (auto width : cfg.widths) {
      m.layers.push_back(
          LayerSpec::make_conv({channels, width, cfg.kernel, cfg.kernel, 1, pad}));
      m.layers.push_back(LayerSpec::make_relu());
      channels = width;
      maybe_pool();
    }
  } else {
    m.layers.push_back(
        LayerSpec::make_conv({channels, cfg.widths[0], cfg.kernel, cfg.kernel, 1, pad}));
    m.layers.push_back(LayerSpec::make_relu());
    channels = cfg.widths[0];
    maybe_pool();
    for (std::size_t i = 1; i < cfg.widths.size(); ++i) {
      m.layers.push_back(LayerSpec::make_residual(channels, cfg.widths[i], cfg.kernel));
      maybe_pool();
    }
  }
  m.layers.push_back(LayerSpec::make_flatten());
  m.layers.push_back(LayerSpec::make_fc(channels * h * w, cfg.num_classes));

  Rng rng(derive_seed(cfg.seed, {0x6d6f64656cULL}));
  auto he_conv = [&](std::size_t i, std::string_view prefix, const ConvSpec& c) {
    const double fan_in = static_cast<double>(c.in_channels * c.kernel_h * c.kernel_w);
    m.params.add(ModelGraph::param_name(i, std::string(prefix) + "weight"),
                 Tensor::randn(conv_weight_shape(c), rng, std::sqrt(2.0 / fan_in)));
    m.params.add(ModelGraph::param_name(i, std::string(prefix) + "bias"),
                 Tensor({c.out_channels}));
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    if (l.kind == LayerKind::conv) {
      he_conv(i, "", l.conv);
    } else if (l.kind == LayerKind::residual) {
      he_conv(i, "conv1.", l.conv);
      he_conv(i, "conv2.", l.conv2);
    } else if (l.kind == LayerKind::fc) {
      m.params.add(ModelGraph::param_name(i, "weight"),
                   Tensor::randn({l.out_dim, l.in_dim}, rng,
                                 std::sqrt(2.0 / static_cast<double>(l.in_dim))));
      m.params.add(ModelGraph::param_name(i, "bias"), Tensor({l.out_dim}));
    }
  }
  m.validate();
  return m;
}

std::uint64_t parameter_count(const LayerSpec& l) {
  auto conv = [](const ConvSpec& c) {
    return static_cast<std::uint64_t>(c.out_channels * c.in_channels * c.kernel_h * c.kernel_w +
                                      c.out_channels);
  };
  switch (l.kind) {
    case LayerKind::conv: return conv(l.conv);
    case LayerKind::fc: return static_cast<std::uint64_t>(l.out_dim * l.in_dim + l.out_dim);
    case LayerKind::residual:
      return conv(l.conv) + conv(l.conv2) +
             (l.shortcut ? static_cast<std::uint64_t>(l.conv2.out_channels * l.conv.in_channels) : 0);
    default: return 0;
  }
}

std::uint64_t parameter_count(const ModelGraph& model) {
  std::uint64_t n = 0;
  for (const auto& l : model.layers) n += parameter_count(l);
  return n;
}

FlopsReport count_flops(const ModelGraph& model) { return count_flops(model, model.meta.input_shape); }

FlopsReport count_flops(const ModelGraph& model, const Shape& input_shape) {
  FlopsReport r;
  if (model.layers.empty()) return r;
  const auto shapes = model.infer_shapes(input_shape);
  auto conv_flops = [](const ConvSpec& c, const Shape& out) {
    return static_cast<std::uint64_t>(2 * out[1] * out[2] * c.out_channels * c.in_channels *
                                      c.kernel_h * c.kernel_w);
  };
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    LayerCost c{i, l.kind, 0, parameter_count(l)};
    switch (l.kind) {
      case LayerKind::conv:
        c.flops = conv_flops(l.conv, shapes[i]);
        break;
      case LayerKind::fc:
        c.flops = static_cast<std::uint64_t>(2 * l.in_dim * l.out_dim);
        break;
      case LayerKind::residual: {
        const Shape& out = shapes[i];
        c.flops = conv_flops(l.conv, out) + conv_flops(l.conv2, out);
        if (l.shortcut) {
          c.flops += static_cast<std::uint64_t>(2 * out[1] * out[2] * l.conv2.out_channels *
                                                l.conv.in_channels);
        }
        break;
      }
      default:
        break;
    }
    r.total_flops += c.flops;
    r.total_params += c.params;
    r.layers.push_back(c);
  }
  return r;
}

}  // namespace fprune
