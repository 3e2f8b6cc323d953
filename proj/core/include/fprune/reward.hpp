#pragma once

#include <cstddef>
#include <optional>

#include "fprune/data.hpp"
#include "fprune/model.hpp"
#include "fprune/surgery.hpp"
#include "fprune/training.hpp"

namespace fprune {

struct RewardConfig {
  // Tolerated accuracy drop b, in percentage points.
  double bound = 2.0;
  // Reference accuracy p* in percent. Measured on the validation split when
  // left empty.
  std::optional<double> baseline_accuracy;
  // Short fine-tune run applied to every candidate before it is scored.
  // epochs == 0 scores the pruned model as is.
  TrainOptions finetune{.epochs = 1, .batch_size = 32, .lr = 0.02, .momentum = 0.9,
                        .weight_decay = 0.0, .max_samples = 256, .seed = 0};
};

struct RewardBreakdown {
  double accuracy = 0.0;  // p-hat, percent
  double psi = 0.0;
  double phi = 0.0;
  double reward = 0.0;
  std::size_t kept = 0;
  std::size_t filters = 0;
};

void validate(const RewardConfig& cfg);

// (b - (p* - p_hat)) / b; positive while the drop stays within the bound.
double accuracy_term(double p_hat, double baseline, double bound);
// ln(N / C). Throws SurgeryError when nothing is kept.
double efficiency_term(std::size_t filters, std::size_t kept);

RewardBreakdown combine_reward(double p_hat, std::size_t kept, std::size_t filters,
                               double baseline, double bound);

// Prunes `model` with `action`, fine-tunes the copy on `train` and scores it
// on `val`. Deterministic in (model, action, cfg). baseline_accuracy must be
// set.
RewardBreakdown evaluate_rollout(const ModelGraph& model, const ActionVector& action,
                                 const LabeledImageSet& train, const LabeledImageSet& val,
                                 const RewardConfig& cfg);

}  // namespace fprune
