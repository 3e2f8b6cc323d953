#include "fprune/reward.hpp"

#include <cmath>

#include "fprune/errors.hpp"

namespace fprune {

void validate(const RewardConfig& cfg) {
  if (!(cfg.bound > 0.0) || !std::isfinite(cfg.bound)) {
    throw ConfigError("reward bound must be a positive number of percentage points");
  }
  if (cfg.baseline_accuracy && !(*cfg.baseline_accuracy >= 0.0 && *cfg.baseline_accuracy <= 100.0)) {
    throw ConfigError("baseline accuracy must lie in [0, 100]");
  }
  if (cfg.finetune.epochs > 0 && cfg.finetune.batch_size == 0) {
    throw ConfigError("rollout fine-tune batch size must be >= 1");
  }
}

double accuracy_term(double p_hat, double baseline, double bound) {
  if (!(bound > 0.0)) throw ConfigError("reward bound must be positive");
  return (bound - (baseline - p_hat)) / bound;
}

double efficiency_term(std::size_t filters, std::size_t kept) {
  if (kept == 0) throw SurgeryError("efficiency term undefined for an empty layer");
  if (kept > filters) throw SurgeryError("kept more filters than the layer has");
  return std::log(static_cast<double>(filters) / static_cast<double>(kept));
}

RewardBreakdown combine_reward(double p_hat, std::size_t kept, std::size_t filters,
                               double baseline, double bound) {
  RewardBreakdown r;
  r.accuracy = p_hat;
  r.kept = kept;
  r.filters = filters;
  r.psi = accuracy_term(p_hat, baseline, bound);
  r.phi = efficiency_term(filters, kept);
  r.reward = r.psi * r.phi;
  return r;
}

RewardBreakdown evaluate_rollout(const ModelGraph& model, const ActionVector& action,
                                 const LabeledImageSet& train, const LabeledImageSet& val,
                                 const RewardConfig& cfg) {
  validate(cfg);
  if (!cfg.baseline_accuracy) throw ConfigError("rollout scoring needs a baseline accuracy");
  ModelGraph pruned = apply_action(model, action);
  if (cfg.finetune.epochs > 0) train_epochs(pruned, train, cfg.finetune);
  const double p_hat = evaluate_accuracy(pruned, val);
  return combine_reward(p_hat, kept_count(action), action.keep.size(), *cfg.baseline_accuracy,
                        cfg.bound);
}

}  // namespace fprune
