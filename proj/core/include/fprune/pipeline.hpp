#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fprune/data.hpp"
#include "fprune/model.hpp"
#include "fprune/reinforce.hpp"
#include "fprune/reward.hpp"
#include "fprune/training.hpp"

namespace fprune {

enum class PruneMethod : std::uint8_t { learned, l1, random };

std::string to_string(PruneMethod method);
PruneMethod parse_prune_method(const std::string& text);

struct TimingOptions {
  bool enabled = true;
  std::size_t warmup = 5;
  std::size_t batches = 50;
  std::size_t batch_size = 64;
};

struct PruneRunConfig {
  double bound = 2.0;
  // Indices into ModelGraph::prune_targets(); empty selects all. Pruned in
  // ascending order.
  std::vector<std::size_t> units;
  TrainerConfig trainer;
  // Fine-tune applied to every rollout candidate.
  TrainOptions rollout_finetune{.epochs = 1, .batch_size = 32, .lr = 0.02, .momentum = 0.9,
                                .weight_decay = 0.0, .max_samples = 256, .seed = 0};
  // Fine-tune applied to the network after each layer is pruned.
  TrainOptions finetune{.epochs = 2, .batch_size = 32, .lr = 0.02, .momentum = 0.9,
                        .weight_decay = 0.0, .max_samples = 0, .seed = 0};
  // Keep p* at the unpruned network's value instead of re-measuring it after
  // every layer.
  bool fixed_pstar = false;
  std::uint64_t seed = 0;
  TimingOptions timing;
};

struct LayerPruneResult {
  std::size_t unit = 0;  // index into prune_targets()
  PruneTarget target;
  std::size_t original_filters = 0;
  std::size_t kept_filters = 0;
  double ratio = 0.0;  // percent of filters removed
  std::vector<std::size_t> kept_indices;
  double pstar = 0.0;          // reference accuracy the layer was scored against
  double val_accuracy = 0.0;   // after this layer's fine-tune
  std::size_t agent_epochs = 0;
  bool agent_converged = false;
};

struct PruneReport {
  std::string method;
  double bound = 0.0;
  std::uint64_t seed = 0;
  // Seed of the random keep-set draw (random method only).
  std::optional<std::uint64_t> selection_seed;
  std::vector<LayerPruneResult> layers;
  std::uint64_t params_before = 0, params_after = 0;
  std::uint64_t flops_before = 0, flops_after = 0;
  std::uint64_t filters_before = 0, filters_after = 0;
  double prune_ratio = 0.0;         // parameters removed, percent
  double filter_prune_ratio = 0.0;  // prunable filters removed, percent
  double saved_flops = 0.0;         // percent
  double val_accuracy_before = 0.0, val_accuracy_after = 0.0;
  // NaN when no test split was supplied.
  double test_accuracy_before = 0.0, test_accuracy_after = 0.0;
  double val_drop = 0.0, test_drop = 0.0;
  // Median milliseconds per batch; NaN when timing is disabled.
  double time_before_ms = 0.0, time_after_ms = 0.0;
};

struct PruneResult {
  ModelGraph model;
  PruneReport report;
  std::vector<TrainLog> logs;
};

// Layer-by-layer, low-to-high: train an agent against the current network,
// apply its action, fine-tune, move on.
PruneResult prune_network(const ModelGraph& model, const LabeledImageSet& train,
                          const LabeledImageSet& val, const LabeledImageSet* test,
                          const PruneRunConfig& cfg);

// keep_counts is aligned with prune_targets(); units left at full width are
// skipped. Selection happens on the current (already pruned and fine-tuned)
// weights, with the same fine-tune as the learned pipeline.
PruneResult prune_l1_baseline(const ModelGraph& model, const std::vector<std::size_t>& keep_counts,
                              const LabeledImageSet& train, const LabeledImageSet& val,
                              const LabeledImageSet* test, const PruneRunConfig& cfg);
PruneResult prune_random_baseline(const ModelGraph& model,
                                  const std::vector<std::size_t>& keep_counts, std::uint64_t seed,
                                  const LabeledImageSet& train, const LabeledImageSet& val,
                                  const LabeledImageSet* test, const PruneRunConfig& cfg);

// Indices of the `keep` filters with the largest L1 norm, ascending. Ties go
// to the lower index.
std::vector<std::size_t> l1_keep_indices(const Tensor& filter_weights, std::size_t keep);
std::vector<std::size_t> random_keep_indices(std::size_t filters, std::size_t keep, Rng& rng);

// Per-unit kept counts from a report, full width for units it did not touch.
std::vector<std::size_t> keep_counts_from_report(const ModelGraph& model, const PruneReport& report);

double median_batch_ms(const ModelGraph& model, const Tensor& images, const TimingOptions& opt);

}  // namespace fprune
