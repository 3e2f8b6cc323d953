#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fprune/model.hpp"

namespace fprune {

// Per-filter keep (1) / remove (0) decisions for one prune target, plus the
// log-probability of the draw under the policy that produced it.
struct ActionVector {
  PruneTarget target;
  std::vector<std::uint8_t> keep;
  double log_prob = 0.0;

  friend bool operator==(const ActionVector&, const ActionVector&) = default;
};

ActionVector keep_all(const ModelGraph& model, const PruneTarget& target);

std::size_t kept_count(const ActionVector& action);
std::vector<std::size_t> kept_indices(const ActionVector& action);

// Returns a new model in which the target keeps exactly the filters marked 1
// (order preserved) and the first weight-bearing consumer loses the matching
// input channels. A residual block consuming a pruned tensor gets an explicit
// 1x1 projection on its skip path. The source model is not modified.
// Throws SurgeryError for an all-zero action, a length mismatch, or a target
// that is not prunable.
ModelGraph apply_action(const ModelGraph& model, const ActionVector& action);

// General filter re-indexing behind apply_action: new filter i of `target` is
// old filter source[i], and every consumer weight reading it is multiplied
// by consumer_scale[i]. Does not check the prunable flag.
ModelGraph remap_filters(const ModelGraph& model, const PruneTarget& target,
                         std::span<const std::size_t> source,
                         std::span<const double> consumer_scale);

// Planted redundancy: appends an exact copy of every filter of `target` and
// halves the consumer weights of both copies. The network function is
// unchanged up to rounding.
ModelGraph duplicate_filters(const ModelGraph& model, const PruneTarget& target);

// Planted redundancy: appends `count` filters whose weights, bias and
// consumer weights are all zero. The network function is unchanged.
ModelGraph add_zero_filters(const ModelGraph& model, const PruneTarget& target, std::size_t count);

}  // namespace fprune
