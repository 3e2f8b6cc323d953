#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fprune/autodiff.hpp"
#include "fprune/tensor.hpp"

namespace fprune {

enum class LayerKind : std::uint8_t {
  conv = 1,
  pool = 2,
  fc = 3,
  relu = 4,
  flatten = 5,
  residual = 6,
};

std::string to_string(LayerKind kind);

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// One entry of the ordered architecture description.
//
// A residual layer is a two-conv block computing
//   relu(conv2(relu(conv1(x))) + skip(x))
// where skip is the identity, or a bias-free 1x1 projection when `shortcut`
// is set (needed once surgery makes the block's input and output widths
// differ).
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  ConvSpec conv;   // conv, or the residual block's first conv
  ConvSpec conv2;  // residual block's second conv
  bool shortcut = false;
  std::size_t pool_h = 2;
  std::size_t pool_w = 2;
  std::size_t in_dim = 0;  // fc
  std::size_t out_dim = 0;
  bool prunable = false;

  static LayerSpec make_conv(ConvSpec spec, bool prunable = true);
  static LayerSpec make_pool(std::size_t h = 2, std::size_t w = 2);
  static LayerSpec make_fc(std::size_t in_dim, std::size_t out_dim);
  static LayerSpec make_relu();
  static LayerSpec make_flatten();
  static LayerSpec make_residual(std::size_t channels, std::size_t mid_channels,
                                 std::size_t kernel = 3, bool prunable = true);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Which conv inside a layer a pruning decision applies to.
enum class ConvSlot : std::uint8_t { first = 0, second = 1 };

struct PruneTarget {
  std::size_t layer = 0;
  ConvSlot slot = ConvSlot::first;

  friend bool operator==(const PruneTarget&, const PruneTarget&) = default;
};

struct ModelMetadata {
  std::string name = "model";
  std::uint32_t version = 1;
  std::uint64_t seed = 0;
  Shape input_shape;  // [C,H,W]
  std::size_t num_classes = 0;
  // When set, each residual block's second conv and its skip path form an
  // additional coupled prune target.
  bool coupled_residual = false;

  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

enum class HookPoint : std::uint8_t { layer_output, block_inner };

// Observes (and may overwrite) activations during an inference forward pass.
using ActivationHook = std::function<void(std::size_t layer, HookPoint point, Tensor& activation)>;

class ModelGraph {
 public:
  std::vector<LayerSpec> layers;
  ParamStore params;
  ModelMetadata meta;

  static std::string param_name(std::size_t layer, std::string_view role);

  // Throws ShapeError if layer shapes do not compose or a parameter is missing
  // or mis-shaped.
  void validate() const;

  // Per-layer output shape (without batch) for meta.input_shape.
  std::vector<Shape> infer_shapes() const;
  std::vector<Shape> infer_shapes(const Shape& input_shape) const;

  // Training forward: parameters are linked to the tape for backward().
  Var forward(Tape& tape, Var input);
  // Inference forward on a const model; `hook` sees every layer output.
  Var forward(Tape& tape, Var input, const ActivationHook& hook) const;

  // Class logits [N, num_classes], evaluated in batches.
  Tensor logits(const Tensor& images, std::size_t batch_size = 256) const;

  std::vector<PruneTarget> prune_targets() const;
  bool is_prunable(const PruneTarget& target) const;
  const ConvSpec& target_conv(const PruneTarget& target) const;
  std::string target_weight_name(const PruneTarget& target) const;
  std::size_t filter_count(const PruneTarget& target) const;
  std::size_t total_prunable_filters() const;
};

struct ToyCnnConfig {
  std::vector<std::size_t> widths;
  std::size_t num_classes = 10;
  Shape input_shape{1, 28, 28};
  std::size_t kernel = 3;
  bool residual = false;
  bool coupled_residual = false;
  std::uint64_t seed = 0;
  std::string name = "toy-cnn";
};

// Plain: [conv -> relu -> pool] per width, then flatten -> fc.
// Residual: stem conv (widths[0]) -> relu -> pool, then one 2-conv block per
// further width (block width = stem width, inner width = that entry), each
// followed by a pool while the spatial extent allows. He-style init.
ModelGraph build_toy_cnn(const ToyCnnConfig& config);

struct LayerCost {
  std::size_t layer = 0;
  LayerKind kind = LayerKind::relu;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

struct FlopsReport {
  std::vector<LayerCost> layers;
  std::uint64_t total_flops = 0;
  std::uint64_t total_params = 0;
};

// One multiply-accumulate counts as 2 FLOPs; pooling, activations, flatten
// and residual additions count as 0. Per image.
FlopsReport count_flops(const ModelGraph& model);
FlopsReport count_flops(const ModelGraph& model, const Shape& input_shape);

std::uint64_t parameter_count(const LayerSpec& layer);
std::uint64_t parameter_count(const ModelGraph& model);

}  // namespace fprune
