#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fprune/autodiff.hpp"
#include "fprune/model.hpp"
#include "fprune/surgery.hpp"

namespace fprune {

enum class AgentArch : std::uint8_t { conv_agent, fc_agent };

std::string to_string(AgentArch arch);

struct AgentConfig {
  // Filter rows longer than this use the convolutional agent.
  std::size_t conv_threshold = 16;
  std::vector<std::size_t> conv_channels{8, 16, 32, 32};
  std::size_t conv_kernel = 7;
  std::size_t hidden = 64;
  // Output bias initialisation: an untrained agent keeps every filter with
  // roughly this probability.
  double initial_keep_prob = 0.8;
  double output_weight_scale = 0.01;
  double prob_floor = 1e-6;
  std::size_t max_resample = 10;
  // Weights are stored at fan_in^power times their effective scale and
  // multiplied back in the forward pass. With Adam this sets how far one
  // step moves each layer's pre-activations; at 0 the wide conv-agent layers
  // lock the policy within a few epochs even on pure-noise rewards.
  double weight_gain_power = 0.5;
  std::uint64_t seed = 0;
};

// Policy over one layer's filters: maps the layer's N x M filter matrix to N
// independent Bernoulli keep-probabilities.
class PruningAgent {
 public:
  PruningAgent(PruneTarget target, std::size_t filters, std::size_t in_channels,
               std::size_t kernel_h, std::size_t kernel_w, AgentConfig config = {});

  static AgentArch select_architecture(std::size_t row_length, std::size_t threshold = 16);

  // [N,m,h,w] filters -> [N, m*h*w], scaled by the largest absolute entry.
  static Tensor prepare_input(const Tensor& filter_weights);

  const PruneTarget& target() const noexcept { return target_; }
  std::size_t filters() const noexcept { return filters_; }
  std::size_t row_length() const noexcept { return row_length_; }
  AgentArch architecture() const noexcept { return arch_; }
  const AgentConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  // Clamped keep-probabilities [N] recorded on `tape`; parameters are linked.
  Var forward(Tape& tape, const Tensor& input);
  std::vector<double> probabilities(const Tensor& input) const;

  // Draws a_i ~ Bernoulli(p_i). All-zero draws are redrawn up to
  // max_resample times, then the most probable filter is forced on.
  ActionVector sample(std::span<const double> probs, Rng& rng) const;
  std::vector<ActionVector> sample_actions(const Tensor& input, std::size_t count,
                                           std::uint64_t seed) const;

  // Keeps filters with p >= 0.5 (at least the most probable one).
  ActionVector mode_action(const Tensor& input) const;

  // Adds sum_i weights[i] * d log pi(actions[i]) / d theta into params().grad
  // and returns sum_i weights[i] * log pi(actions[i]).
  double accumulate_log_prob_grad(const Tensor& input, std::span<const ActionVector> actions,
                                  std::span<const double> weights);

 private:
  struct Stage {
    std::size_t pool_h = 1, pool_w = 1;
  };

  void add_weight(const std::string& name, Shape shape, double fan_in, double init_std, Rng& rng);
  double gain(const std::string& name) const;

  template <typename ParamFn>
  Var run(Tape& tape, const Tensor& input, ParamFn&& param) const;

  PruneTarget target_;
  std::size_t filters_;
  std::size_t row_length_;
  AgentArch arch_;
  AgentConfig config_;
  std::vector<Stage> stages_;
  ParamStore params_;
  std::vector<std::pair<std::string, double>> gains_;
};

PruningAgent build_agent(const PruneTarget& target, std::size_t filters, std::size_t in_channels,
                         std::size_t kernel_h, std::size_t kernel_w, const AgentConfig& config = {});
// Agent sized for the target's current filters in `model`.
PruningAgent build_agent(const ModelGraph& model, const PruneTarget& target,
                         const AgentConfig& config = {});

// Agent input for a model layer: the target's weights, rearranged and scaled.
Tensor agent_input(const ModelGraph& model, const PruneTarget& target);

double bernoulli_log_prob(std::span<const double> probs, std::span<const std::uint8_t> action);

}  // namespace fprune
