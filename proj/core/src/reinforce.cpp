#include "fprune/reinforce.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "fprune/errors.hpp"
#include "fprune/optim.hpp"
#include "fprune/training.hpp"

namespace fprune {

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,mean_reward,mean_kept,min_prob,mean_prob,max_prob\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.mean_reward << ',' << e.mean_kept << ',' << e.min_prob << ','
       << e.mean_prob << ',' << e.max_prob << '\n';
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<double> normalize_rewards(std::span<const double> rewards) {
  if (rewards.size() < 2) throw ConfigError("reward normalisation needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  // Treat spreads at rounding level as ties; dividing by them only amplifies noise.
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

double moving_average_reward(const TrainLog& log, std::size_t epoch, std::size_t window) {
  if (epoch == 0 || epoch > log.epochs.size() || window == 0) {
    throw std::out_of_range("moving average outside the logged epochs");
  }
  const std::size_t lo = epoch > window ? epoch - window : 0;
  double s = 0.0;
  for (std::size_t i = lo; i < epoch; ++i) s += log.epochs[i].mean_reward;
  return s / static_cast<double>(epoch - lo);
}

std::vector<Tensor> policy_gradient(PruningAgent& agent, const Tensor& input,
                                    std::span<const RolloutRecord> records) {
  std::vector<ActionVector> actions;
  std::vector<double> weights;
  for (const auto& r : records) {
    actions.push_back(r.action);
    weights.push_back(r.normalized_reward);
  }
  agent.params().zero_grad();
  agent.accumulate_log_prob_grad(input, actions, weights);
  std::vector<Tensor> out;
  for (auto& p : agent.params().params()) out.push_back(p.grad);
  agent.params().zero_grad();
  return out;
}

namespace {

using ActionKey = std::vector<std::uint8_t>;

// Scores `pending` on up to `workers` threads; result order follows input order.
std::vector<double> score_all(const std::vector<const ActionVector*>& pending,
                              const RewardFunction& reward, std::size_t workers) {
  std::vector<double> out(pending.size(), 0.0);
  workers = std::min(workers, pending.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < pending.size(); ++i) out[i] = reward(*pending[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto body = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      try {
        out[i] = reward(*pending[i]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace

AgentTrainingResult train_agent(PruningAgent agent, const Tensor& input,
                                const RewardFunction& reward, const TrainerConfig& cfg) {
  if (cfg.rollouts < 2) throw ConfigError("at least two rollouts per epoch are required");
  if (!(cfg.lr > 0.0)) throw ConfigError("agent learning rate must be positive");
  if (cfg.window == 0) throw ConfigError("convergence window must be >= 1");
  std::size_t workers = cfg.workers;
  if (workers == 0) workers = std::max<unsigned>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.rollouts);

  TrainLog log;
  log.target = agent.target();
  std::map<ActionKey, double> cache;
  AdamOptions adam{.lr = cfg.lr};
  std::size_t stable = 0;
  double prev_avg = 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto probs = agent.probabilities(input);
    Rng rng(derive_seed(cfg.seed, {0x726f6c6cULL, epoch}));
    std::vector<RolloutRecord> buffer(cfg.rollouts);
    for (auto& r : buffer) r.action = agent.sample(probs, rng);

    // Unique actions not yet scored, in first-seen order.
    std::vector<const ActionVector*> pending;
    std::map<ActionKey, std::size_t> slot;
    for (const auto& r : buffer) {
      if (cfg.cache_rewards && cache.count(r.action.keep)) continue;
      if (cfg.cache_rewards && slot.count(r.action.keep)) continue;
      slot.emplace(r.action.keep, pending.size());
      pending.push_back(&r.action);
    }
    if (!cfg.cache_rewards) {
      pending.clear();
      for (const auto& r : buffer) pending.push_back(&r.action);
    }
    const auto scored = score_all(pending, reward, workers);
    log.reward_evaluations += scored.size();
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      if (!cfg.cache_rewards) {
        buffer[i].reward = scored[i];
        continue;
      }
      auto hit = cache.find(buffer[i].action.keep);
      if (hit == cache.end()) {
        hit = cache.emplace(buffer[i].action.keep, scored[slot.at(buffer[i].action.keep)]).first;
      }
      buffer[i].reward = hit->second;
    }

    std::vector<double> raw;
    double kept = 0.0;
    for (const auto& r : buffer) {
      if (!std::isfinite(r.reward)) throw NumericError("non-finite reward");
      raw.push_back(r.reward);
      kept += static_cast<double>(kept_count(r.action));
    }
    const auto normalized = normalize_rewards(raw);
    for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i].normalized_reward = normalized[i];

    EpochLog e;
    e.epoch = epoch;
    for (double r : raw) e.mean_reward += r;
    e.mean_reward /= static_cast<double>(raw.size());
    e.mean_kept = kept / static_cast<double>(buffer.size());
    e.min_prob = *std::min_element(probs.begin(), probs.end());
    e.max_prob = *std::max_element(probs.begin(), probs.end());
    for (double p : probs) e.mean_prob += p;
    e.mean_prob /= static_cast<double>(probs.size());
    log.epochs.push_back(e);

    // Ascent on the objective == descent on its negation.
    auto grads = policy_gradient(agent, input, buffer);
    auto& ps = agent.params().params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ps[i].grad = grads[i];
      for (auto& g : ps[i].grad.data()) g = -g;
    }
    adam_step(agent.params(), adam);
    agent.params().zero_grad();

    const double avg = moving_average_reward(log, epoch, cfg.window);
    if (epoch > cfg.window) {
      stable = std::abs(avg - prev_avg) < cfg.tolerance ? stable + 1 : 0;
      if (stable >= cfg.window) {
        log.converged = true;
        if (cfg.stop_on_convergence) break;
      }
    }
    prev_avg = avg;
  }

  ActionVector final_action = agent.mode_action(input);
  return {std::move(agent), std::move(log), std::move(final_action)};
}

AgentTrainingResult train_agent_one_layer(const ModelGraph& model, const PruneTarget& target,
                                          const LabeledImageSet& train, const LabeledImageSet& val,
                                          RewardConfig reward_cfg, const TrainerConfig& cfg) {
  if (!model.is_prunable(target)) throw SurgeryError("target is not prunable");
  if (cfg.rollouts < 2) throw ConfigError("at least two rollouts per epoch are required");
  validate(reward_cfg);
  if (!reward_cfg.baseline_accuracy) reward_cfg.baseline_accuracy = evaluate_accuracy(model, val);
  PruningAgent agent = build_agent(model, target, cfg.agent);
  const Tensor input = agent_input(model, target);
  RewardFunction fn = [&](const ActionVector& a) {
    return evaluate_rollout(model, a, train, val, reward_cfg).reward;
  };
  return train_agent(std::move(agent), input, fn, cfg);
}

}  // namespace fprune
