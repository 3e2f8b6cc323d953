#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fprune/agent.hpp"
#include "fprune/data.hpp"
#include "fprune/model.hpp"
#include "fprune/reward.hpp"

namespace fprune {

struct TrainerConfig {
  std::size_t rollouts = 5;  // M, draws per epoch
  double lr = 0.01;
  std::size_t max_epochs = 300;
  // Stop once the moving average of raw reward over `window` epochs has
  // moved by less than `tolerance` for `window` consecutive epochs.
  std::size_t window = 50;
  double tolerance = 1e-3;
  bool stop_on_convergence = true;
  // Reward evaluation threads; 0 picks hardware concurrency. Never more than M.
  std::size_t workers = 1;
  // Reuse the reward of an action already scored in this run. Only valid
  // when the reward is a deterministic function of the action.
  bool cache_rewards = true;
  std::uint64_t seed = 0;
  AgentConfig agent;
};

struct RolloutRecord {
  ActionVector action;
  double reward = 0.0;
  double normalized_reward = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  double mean_kept = 0.0;
  double min_prob = 0.0;
  double mean_prob = 0.0;
  double max_prob = 0.0;
};

struct TrainLog {
  PruneTarget target;
  std::vector<EpochLog> epochs;
  bool converged = false;
  std::size_t reward_evaluations = 0;  // excludes cache hits

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

// Zero mean, unit population standard deviation. All-equal input maps to all
// zeros. Throws ConfigError for fewer than two rewards.
std::vector<double> normalize_rewards(std::span<const double> rewards);

// Moving average of raw rewards over the last `window` epochs ending at
// `epoch` (1-based, inclusive). Shorter prefixes average what exists.
double moving_average_reward(const TrainLog& log, std::size_t epoch, std::size_t window);

// Must be safe to call concurrently when workers > 1.
using RewardFunction = std::function<double(const ActionVector&)>;

struct AgentTrainingResult {
  PruningAgent agent;
  TrainLog log;
  ActionVector final_action;
};

// Ascent direction for one epoch's buffer: sum_i R-hat_i grad log pi(A_i),
// one tensor per agent parameter in store order. Leaves agent grads zeroed.
std::vector<Tensor> policy_gradient(PruningAgent& agent, const Tensor& input,
                                    std::span<const RolloutRecord> records);

// Policy-gradient loop against an arbitrary reward. The agent input stays
// fixed for the whole run.
AgentTrainingResult train_agent(PruningAgent agent, const Tensor& input,
                                const RewardFunction& reward, const TrainerConfig& cfg);

// One layer of the network: rewards come from evaluate_rollout on `model`.
// If reward_cfg has no baseline accuracy it is measured on `val` first.
AgentTrainingResult train_agent_one_layer(const ModelGraph& model, const PruneTarget& target,
                                          const LabeledImageSet& train, const LabeledImageSet& val,
                                          RewardConfig reward_cfg, const TrainerConfig& cfg);

}  // namespace fprune
