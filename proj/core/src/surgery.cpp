#include "fprune/surgery.hpp"

#include <algorithm>
#include <numeric>

#include "fprune/errors.hpp"

namespace fprune {

namespace {

// Keeps rows source[i] of a tensor whose leading axis indexes filters.
Tensor take_rows(const Tensor& t, std::span<const std::size_t> source) {
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = source.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= t.dim(0)) throw SurgeryError("filter index out of range");
    std::copy_n(t.data().begin() + static_cast<long>(source[i] * row), row,
                out.data().begin() + static_cast<long>(i * row));
  }
  return out;
}

// Re-indexes the input-channel axis of a consumer weight. Conv weights are
// [K,C,kh,kw]; fc weights are [out, C*block] with `block` values per channel.
Tensor take_columns(const Tensor& t, std::span<const std::size_t> source,
                    std::span<const double> scale, std::size_t block) {
  const std::size_t k = t.dim(0);
  const std::size_t row_old = t.size() / k;
  const std::size_t inner = t.rank() > 2 ? row_old / t.dim(1) : block;
  const std::size_t groups = row_old / inner;
  Shape shape = t.shape();
  shape[1] = t.rank() > 2 ? source.size() : source.size() * block;
  Tensor out(shape);
  const std::size_t row_new = out.size() / k;
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] >= groups) throw SurgeryError("channel index out of range");
      const double* src = t.data().data() + r * row_old + source[i] * inner;
      double* dst = out.data().data() + r * row_new + i * inner;
      for (std::size_t j = 0; j < inner; ++j) dst[j] = src[j] * scale[i];
    }
  }
  return out;
}

Tensor identity_projection(std::size_t channels) {
  Tensor p({channels, channels, 1, 1});
  for (std::size_t j = 0; j < channels; ++j) p.at(j, j, 0, 0) = 1.0;
  return p;
}

void ensure_shortcut(ModelGraph& m, std::size_t layer) {
  LayerSpec& l = m.layers[layer];
  if (l.shortcut) return;
  if (l.conv.in_channels != l.conv2.out_channels) {
    throw SurgeryError("identity skip with mismatched widths at layer " + std::to_string(layer));
  }
  m.params.add(ModelGraph::param_name(layer, "shortcut.weight"),
               identity_projection(l.conv.in_channels));
  l.shortcut = true;
}

void remap_consumer(ModelGraph& m, const std::vector<Shape>& shapes, std::size_t start,
                    std::span<const std::size_t> source, std::span<const double> scale) {
  std::size_t block = 1;
  bool flattened = false;
  const std::size_t n = source.size();
  for (std::size_t j = start; j < m.layers.size(); ++j) {
    LayerSpec& l = m.layers[j];
    switch (l.kind) {
      case LayerKind::relu:
      case LayerKind::pool:
        continue;
      case LayerKind::flatten: {
        const Shape& in = shapes[j - 1];
        block = in[1] * in[2];
        flattened = true;
        continue;
      }
      case LayerKind::conv: {
        const auto name = ModelGraph::param_name(j, "weight");
        m.params.replace(name, take_columns(m.params.at(name).value, source, scale, 1));
        l.conv.in_channels = n;
        return;
      }
      case LayerKind::fc: {
        if (!flattened) throw SurgeryError("fc consumer without a preceding flatten");
        const auto name = ModelGraph::param_name(j, "weight");
        m.params.replace(name, take_columns(m.params.at(name).value, source, scale, block));
        l.in_dim = n * block;
        return;
      }
      case LayerKind::residual: {
        const auto c1 = ModelGraph::param_name(j, "conv1.weight");
        m.params.replace(c1, take_columns(m.params.at(c1).value, source, scale, 1));
        ensure_shortcut(m, j);
        const auto sc = ModelGraph::param_name(j, "shortcut.weight");
        m.params.replace(sc, take_columns(m.params.at(sc).value, source, scale, 1));
        l.conv.in_channels = n;
        return;
      }
    }
  }
  throw SurgeryError("pruned layer has no downstream consumer");
}

bool is_identity(std::span<const std::size_t> source, std::span<const double> scale,
                 std::size_t filters) {
  if (source.size() != filters) return false;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] != i || scale[i] != 1.0) return false;
  }
  return true;
}

}  // namespace

ActionVector keep_all(const ModelGraph& model, const PruneTarget& target) {
  return ActionVector{target, std::vector<std::uint8_t>(model.filter_count(target), 1), 0.0};
}

std::size_t kept_count(const ActionVector& action) {
  return static_cast<std::size_t>(std::count_if(action.keep.begin(), action.keep.end(),
                                                [](std::uint8_t a) { return a != 0; }));
}

std::vector<std::size_t> kept_indices(const ActionVector& action) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < action.keep.size(); ++i) {
    if (action.keep[i]) out.push_back(i);
  }
  return out;
}

ModelGraph remap_filters(const ModelGraph& model, const PruneTarget& target,
                         std::span<const std::size_t> source,
                         std::span<const double> consumer_scale) {
  if (source.empty()) throw SurgeryError("a layer must keep at least one filter");
  if (consumer_scale.size() != source.size()) throw SurgeryError("scale/source length mismatch");
  const std::size_t filters = model.filter_count(target);
  if (is_identity(source, consumer_scale, filters)) return model;

  const auto shapes = model.infer_shapes();
  ModelGraph out = model;
  const std::size_t L = target.layer;
  LayerSpec& l = out.layers[L];
  const std::size_t n = source.size();
  auto rows = [&](const std::string& name) {
    out.params.replace(name, take_rows(out.params.at(name).value, source));
  };

  if (l.kind == LayerKind::conv) {
    rows(ModelGraph::param_name(L, "weight"));
    rows(ModelGraph::param_name(L, "bias"));
    l.conv.out_channels = n;
    remap_consumer(out, shapes, L + 1, source, consumer_scale);
  } else if (l.kind == LayerKind::residual && target.slot == ConvSlot::first) {
    rows(ModelGraph::param_name(L, "conv1.weight"));
    rows(ModelGraph::param_name(L, "conv1.bias"));
    const auto c2 = ModelGraph::param_name(L, "conv2.weight");
    out.params.replace(c2, take_columns(out.params.at(c2).value, source, consumer_scale, 1));
    l.conv.out_channels = n;
    l.conv2.in_channels = n;
  } else if (l.kind == LayerKind::residual) {
    rows(ModelGraph::param_name(L, "conv2.weight"));
    rows(ModelGraph::param_name(L, "conv2.bias"));
    ensure_shortcut(out, L);
    rows(ModelGraph::param_name(L, "shortcut.weight"));
    out.layers[L].conv2.out_channels = n;
    remap_consumer(out, shapes, L + 1, source, consumer_scale);
  } else {
    throw SurgeryError("layer " + std::to_string(L) + " is not a conv layer");
  }
  out.validate();
  return out;
}

ModelGraph apply_action(const ModelGraph& model, const ActionVector& action) {
  if (!model.is_prunable(action.target)) {
    throw SurgeryError("layer " + std::to_string(action.target.layer) + " is not prunable");
  }
  const std::size_t filters = model.filter_count(action.target);
  if (action.keep.size() != filters) {
    throw SurgeryError("action has " + std::to_string(action.keep.size()) +
                       " entries but the layer has " + std::to_string(filters) + " filters");
  }
  const auto keep = kept_indices(action);
  if (keep.empty()) throw SurgeryError("all-zero action: a layer must keep at least one filter");
  const std::vector<double> scale(keep.size(), 1.0);
  return remap_filters(model, action.target, keep, scale);
}

ModelGraph duplicate_filters(const ModelGraph& model, const PruneTarget& target) {
  const std::size_t k = model.filter_count(target);
  std::vector<std::size_t> source(2 * k);
  for (std::size_t i = 0; i < 2 * k; ++i) source[i] = i % k;
  const std::vector<double> scale(2 * k, 0.5);
  return remap_filters(model, target, source, scale);
}

ModelGraph add_zero_filters(const ModelGraph& model, const PruneTarget& target, std::size_t count) {
  const std::size_t k = model.filter_count(target);
  std::vector<std::size_t> source(k + count, 0);
  std::iota(source.begin(), source.begin() + static_cast<long>(k), std::size_t{0});
  std::vector<double> scale(k + count, 0.0);
  std::fill_n(scale.begin(), k, 1.0);
  ModelGraph out = remap_filters(model, target, source, scale);

  const std::size_t L = target.layer;
  const bool second = out.layers[L].kind == LayerKind::residual && target.slot == ConvSlot::second;
  std::vector<std::string> zeroed;
  if (out.layers[L].kind == LayerKind::conv) {
    zeroed = {ModelGraph::param_name(L, "weight"), ModelGraph::param_name(L, "bias")};
  } else if (!second) {
    zeroed = {ModelGraph::param_name(L, "conv1.weight"), ModelGraph::param_name(L, "conv1.bias")};
  } else {
    zeroed = {ModelGraph::param_name(L, "conv2.weight"), ModelGraph::param_name(L, "conv2.bias"),
              ModelGraph::param_name(L, "shortcut.weight")};
  }
  for (const auto& name : zeroed) {
    Tensor& t = out.params.at(name).value;
    const std::size_t row = t.size() / t.dim(0);
    std::fill(t.data().begin() + static_cast<long>(k * row), t.data().end(), 0.0);
  }
  return out;
}

}  // namespace fprune
