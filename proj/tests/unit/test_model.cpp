#include <gtest/gtest.h>

#include "fprune/model.hpp"
#include "fprune/ops.hpp"
#include "test_support.hpp"

using namespace fprune;

namespace {

ModelGraph tiny_plain(std::uint64_t seed = 1) {
  ToyCnnConfig c;
  c.widths = {2, 3};
  c.num_classes = 4;
  c.input_shape = {1, 6, 6};
  c.seed = seed;
  return build_toy_cnn(c);
}

ModelGraph tiny_residual(std::uint64_t seed = 1, bool coupled = false) {
  ToyCnnConfig c;
  c.widths = {3, 2, 4};
  c.num_classes = 3;
  c.input_shape = {2, 8, 8};
  c.residual = true;
  c.coupled_residual = coupled;
  c.seed = seed;
  return build_toy_cnn(c);
}

// Zero-initialised biases put relu inputs exactly on the kink wherever the
// incoming activations are all zero; jitter them for derivative checks.
void jitter_biases(ModelGraph& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : m.params.params()) {
    if (p.name.ends_with("bias")) p.value = Tensor::randn(p.value.shape(), rng, 0.2);
  }
}

}  // namespace

TEST(ToyCnn, LayerSequence) {
  auto m = tiny_plain();
  std::vector<LayerKind> kinds;
  for (const auto& l : m.layers) kinds.push_back(l.kind);
  const std::vector<LayerKind> expect{LayerKind::conv, LayerKind::relu, LayerKind::pool,
                                      LayerKind::conv, LayerKind::relu, LayerKind::pool,
                                      LayerKind::flatten, LayerKind::fc};
  EXPECT_EQ(kinds, expect);
  EXPECT_EQ(m.infer_shapes().back(), (Shape{4}));
  EXPECT_EQ(m.prune_targets().size(), 2u);
  EXPECT_EQ(m.total_prunable_filters(), 5u);
}

TEST(ToyCnn, RejectsBadConfigs) {
  ToyCnnConfig c;
  c.widths = {4};
  EXPECT_THROW(build_toy_cnn(c), ShapeError);
  c.widths = {4, 1};
  EXPECT_THROW(build_toy_cnn(c), ShapeError);
  c.widths = {4, 4};
  c.num_classes = 1;
  EXPECT_THROW(build_toy_cnn(c), ShapeError);
}

TEST(ToyCnn, SameSeedSameWeights) {
  EXPECT_EQ(tiny_plain(3).params.at("layer0.weight").value,
            tiny_plain(3).params.at("layer0.weight").value);
  EXPECT_NE(tiny_plain(3).params.at("layer0.weight").value,
            tiny_plain(4).params.at("layer0.weight").value);
}

TEST(ModelGraph, ValidateCatchesMissingAndMisshapenParams) {
  auto m = tiny_plain();
  m.params.replace("layer3.weight", Tensor({3, 2, 3, 2}));
  EXPECT_THROW(m.validate(), ShapeError);
  auto n = tiny_plain();
  n.params.remove("layer7.bias");
  EXPECT_THROW(n.validate(), ShapeError);
  auto e = tiny_plain();
  e.params.add("stray", Tensor({1}));
  EXPECT_THROW(e.validate(), ShapeError);
}

TEST(ModelGraph, ValidateCatchesBrokenComposition) {
  auto m = tiny_plain();
  m.layers[3].conv.in_channels = 5;
  EXPECT_THROW(m.validate(), ShapeError);
}

TEST(Flops, HandCountedPlainNet) {
  // conv1: 6x6 out, 2 filters, 1x3x3 -> 2*36*2*9 = 1296
  // conv2: 3x3 out, 3 filters, 2x3x3 -> 2*9*3*18 = 972
  // fc: 3 -> 4 -> 2*12 = 24
  auto m = tiny_plain();
  auto r = count_flops(m);
  EXPECT_EQ(r.total_flops, 1296u + 972u + 24u);
  EXPECT_EQ(r.total_params, 20u + 57u + 16u);
  EXPECT_EQ(parameter_count(m), r.total_params);
  EXPECT_EQ(r.layers.size(), m.layers.size());
}

TEST(Flops, HandCountedResidualBlock) {
  auto m = tiny_residual();
  // stem conv 2->3 on 8x8: 2*64*3*18 = 6912 ; pool -> 4x4
  // block(3, mid 2): conv1 3->2: 2*16*2*27 = 1728 ; conv2 2->3: 2*16*3*18 = 1728 ; pool -> 2x2
  // block(3, mid 4): conv1 3->4: 2*4*4*27 = 864 ; conv2 4->3: 2*4*3*36 = 864 ; pool -> 1x1
  // fc 3 -> 3: 18
  EXPECT_EQ(count_flops(m).total_flops, 6912u + 3456u + 1728u + 18u);
}

TEST(Forward, LogitsBatchingIsExact) {
  auto m = tiny_plain();
  Rng rng(2);
  Tensor x = Tensor::uniform({7, 1, 6, 6}, rng, 0, 1);
  EXPECT_EQ(m.logits(x, 7), m.logits(x, 3));
}

TEST(Forward, HookSeesEveryLayer) {
  auto m = tiny_residual();
  std::vector<std::pair<std::size_t, HookPoint>> seen;
  Tape t(false);
  Rng rng(3);
  m.forward(t, t.constant(Tensor::uniform({1, 2, 8, 8}, rng, 0, 1)),
            [&](std::size_t i, HookPoint p, Tensor&) { seen.emplace_back(i, p); });
  std::size_t outputs = 0, inner = 0;
  for (auto& [i, p] : seen) (p == HookPoint::layer_output ? outputs : inner)++;
  EXPECT_EQ(outputs, m.layers.size());
  EXPECT_EQ(inner, 2u);
}

TEST(Forward, PlainNetGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = tiny_plain(seed);
    jitter_biases(m, seed);
    Rng rng(seed + 50);
    Tensor x = Tensor::uniform({2, 1, 6, 6}, rng, 0, 1);
    const std::vector<int> labels{static_cast<int>(seed % 4), static_cast<int>((seed + 1) % 4)};
    auto loss = [&](Tape& t, ParamStore&) {
      return softmax_cross_entropy(m.forward(t, t.constant(x)), labels);
    };
    EXPECT_LT(fprune::testing::gradient_check(loss, m.params), 1e-4) << "seed " << seed;
  }
}

TEST(Forward, ResidualNetGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = tiny_residual(seed);
    jitter_biases(m, seed);
    Rng rng(seed + 70);
    Tensor x = Tensor::uniform({2, 2, 8, 8}, rng, 0, 1);
    const std::vector<int> labels{static_cast<int>(seed % 3), static_cast<int>((seed + 2) % 3)};
    auto loss = [&](Tape& t, ParamStore&) {
      return softmax_cross_entropy(m.forward(t, t.constant(x)), labels);
    };
    EXPECT_LT(fprune::testing::gradient_check(loss, m.params), 1e-4) << "seed " << seed;
  }
}

TEST(PruneTargets, ResidualSlots) {
  auto plain = tiny_residual(1, false);
  auto coupled = tiny_residual(1, true);
  // stem + one conv1 per block; coupled adds each block's conv2
  EXPECT_EQ(plain.prune_targets().size(), 3u);
  EXPECT_EQ(coupled.prune_targets().size(), 5u);
  for (const auto& t : coupled.prune_targets()) EXPECT_TRUE(coupled.is_prunable(t));
  EXPECT_EQ(coupled.target_weight_name({3, ConvSlot::second}), "layer3.conv2.weight");
}

TEST(PruneTargets, NonPrunableLayersAreSkipped) {
  auto m = tiny_plain();
  m.layers[0].prunable = false;
  EXPECT_EQ(m.prune_targets().size(), 1u);
  EXPECT_FALSE(m.is_prunable({0, ConvSlot::first}));
  EXPECT_FALSE(m.is_prunable({1, ConvSlot::first}));
}
