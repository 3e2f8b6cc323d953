#pragma once

#include <set>
#include <string>

#include "fprune/model.hpp"
#include "fprune/surgery.hpp"

namespace fprune::testing {

// Random small network: plain conv stacks of 2-4 layers or residual nets
// with coupled block targets, on inputs of varying size so the last conv
// meets the flatten/fc boundary at different spatial extents.
inline ModelGraph random_net(Rng& rng) {
  ToyCnnConfig c;
  const bool residual = rng() % 3 == 0;
  const std::size_t depth = residual ? 2 + rng() % 2 : 2 + rng() % 3;
  for (std::size_t i = 0; i < depth; ++i) c.widths.push_back(2 + rng() % 5);
  const std::size_t side = 3 + rng() % 8;
  c.input_shape = {1 + rng() % 3, side, side + rng() % 3};
  c.num_classes = 2 + rng() % 4;
  c.kernel = rng() % 4 == 0 ? 1 : 3;
  c.residual = residual;
  c.coupled_residual = residual;
  c.seed = rng();
  auto m = build_toy_cnn(c);
  // Non-zero biases so removed filters would leak if surgery kept them.
  for (auto& p : m.params.params()) {
    if (p.name.ends_with("bias")) p.value = Tensor::randn(p.value.shape(), rng, 0.3);
  }
  return m;
}

inline ActionVector random_action(const ModelGraph& m, const PruneTarget& t, Rng& rng) {
  ActionVector a = keep_all(m, t);
  for (auto& k : a.keep) k = rng() % 2;
  if (kept_count(a) == 0) a.keep[rng() % a.keep.size()] = 1;
  return a;
}

// Where the removed channels of `t` surface in the hooked forward pass.
inline std::pair<std::size_t, HookPoint> mask_site(const ModelGraph& m, const PruneTarget& t) {
  if (m.layers[t.layer].kind == LayerKind::residual && t.slot == ConvSlot::first) {
    return {t.layer, HookPoint::block_inner};
  }
  return {t.layer, HookPoint::layer_output};
}

// Logits of `m` with the channels `action` removes forced to zero.
inline Tensor masked_logits(const ModelGraph& m, const ActionVector& action, const Tensor& x) {
  const auto [layer, point] = mask_site(m, action.target);
  auto hook = [&, layer = layer, point = point](std::size_t i, HookPoint p, Tensor& act) {
    if (i != layer || p != point) return;
    const std::size_t n = act.dim(0), c = act.dim(1), hw = act.size() / (n * c);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        if (!action.keep[ch])
          for (std::size_t j = 0; j < hw; ++j) act[(b * c + ch) * hw + j] = 0.0;
  };
  Tape tape(false);
  return m.forward(tape, tape.constant(x), hook).value();
}

inline Tensor plain_logits(const ModelGraph& m, const Tensor& x) {
  Tape tape(false);
  return m.forward(tape, tape.constant(x), ActivationHook{}).value();
}

}  // namespace fprune::testing
