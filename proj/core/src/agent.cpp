#include "fprune/agent.hpp"

#include <algorithm>
#include <cmath>

#include "fprune/ops.hpp"

namespace fprune {

std::string to_string(AgentArch arch) {
  return arch == AgentArch::conv_agent ? "conv-agent" : "fc-agent";
}

AgentArch PruningAgent::select_architecture(std::size_t row_length, std::size_t threshold) {
  return row_length > threshold ? AgentArch::conv_agent : AgentArch::fc_agent;
}

Tensor PruningAgent::prepare_input(const Tensor& w) {
  if (w.rank() < 2) throw ShapeError("filter weights must have a leading filter axis");
  const std::size_t n = w.dim(0);
  Tensor out = w.reshaped({n, w.size() / n});
  const double m = out.max_abs();
  if (m > 0.0) {
    for (auto& v : out.data()) v /= m;
  }
  return out;
}

PruningAgent::PruningAgent(PruneTarget target, std::size_t filters, std::size_t in_channels,
                           std::size_t kernel_h, std::size_t kernel_w, AgentConfig config)
    : target_(target),
      filters_(filters),
      row_length_(in_channels * kernel_h * kernel_w),
      arch_(select_architecture(row_length_, config.conv_threshold)),
      config_(std::move(config)) {
  if (filters == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0) {
    throw ShapeError("agent dimensions must all be >= 1");
  }
  Rng rng(derive_seed(config_.seed, {0x6167656e74ULL, target.layer,
                                     static_cast<std::uint64_t>(target.slot)}));
  std::size_t features = filters_ * row_length_;
  if (arch_ == AgentArch::conv_agent) {
    std::size_t c = 1, h = filters_, w = row_length_;
    const std::size_t k = config_.conv_kernel;
    for (std::size_t s = 0; s < config_.conv_channels.size(); ++s) {
      const std::size_t out = config_.conv_channels[s];
      const double fan_in = static_cast<double>(c * k * k);
      add_weight("conv" + std::to_string(s) + ".weight", {out, c, k, k}, fan_in,
                 std::sqrt(2.0 / fan_in), rng);
      params_.add("conv" + std::to_string(s) + ".bias", Tensor({out}));
      Stage st;
      st.pool_h = h >= 2 ? 2 : 1;
      st.pool_w = w >= 2 ? 2 : 1;
      h /= st.pool_h;
      w /= st.pool_w;
      stages_.push_back(st);
      c = out;
    }
    features = c * h * w;
  }
  add_weight("fc1.weight", {config_.hidden, features}, static_cast<double>(features),
             std::sqrt(2.0 / static_cast<double>(features)), rng);
  params_.add("fc1.bias", Tensor({config_.hidden}));
  add_weight("fc2.weight", {filters_, config_.hidden}, static_cast<double>(config_.hidden),
             config_.output_weight_scale, rng);
  const double p0 = std::clamp(config_.initial_keep_prob, 1e-3, 1.0 - 1e-3);
  params_.add("fc2.bias", Tensor({filters_}, std::log(p0 / (1.0 - p0))));
}

void PruningAgent::add_weight(const std::string& name, Shape shape, double fan_in, double init_std,
                              Rng& rng) {
  const double gain = std::pow(fan_in, -config_.weight_gain_power);
  params_.add(name, Tensor::randn(std::move(shape), rng, init_std / gain));
  gains_.emplace_back(name, gain);
}

double PruningAgent::gain(const std::string& name) const {
  for (const auto& [n, g] : gains_)
    if (n == name) return g;
  return 1.0;
}

template <typename ParamFn>
Var PruningAgent::run(Tape& tape, const Tensor& input, ParamFn&& param) const {
  if (input.rank() != 2 || input.dim(0) != filters_ || input.dim(1) != row_length_) {
    throw ShapeError("agent expects a " + std::to_string(filters_) + "x" +
                     std::to_string(row_length_) + " filter matrix, got " +
                     shape_string(input.shape()));
  }
  auto weight = [&](const std::string& name) {
    const double g = gain(name);
    return g == 1.0 ? param(name) : scale(param(name), g);
  };
  Var x;
  if (arch_ == AgentArch::conv_agent) {
    x = tape.constant(input.reshaped({1, 1, filters_, row_length_}));
    const std::size_t pad = config_.conv_kernel / 2;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const std::string p = "conv" + std::to_string(s);
      x = relu(conv2d(x, weight(p + ".weight"), param(p + ".bias"), {1, pad}));
      if (stages_[s].pool_h > 1 || stages_[s].pool_w > 1) {
        x = max_pool2d(x, stages_[s].pool_h, stages_[s].pool_w);
      }
    }
    x = flatten(x);
  } else {
    x = tape.constant(input.reshaped({1, filters_ * row_length_}));
  }
  x = relu(linear(x, weight("fc1.weight"), param("fc1.bias")));
  x = sigmoid(linear(x, weight("fc2.weight"), param("fc2.bias")));
  x = reshape(x, {filters_});
  return clamp(x, config_.prob_floor, 1.0 - config_.prob_floor);
}

Var PruningAgent::forward(Tape& tape, const Tensor& input) {
  return run(tape, input, [&](const std::string& name) { return tape.param(params_.at(name)); });
}

std::vector<double> PruningAgent::probabilities(const Tensor& input) const {
  Tape tape(false);
  Var p = run(tape, input,
              [&](const std::string& name) { return tape.constant(params_.at(name).value); });
  return p.value().storage();
}

ActionVector PruningAgent::sample(std::span<const double> probs, Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ActionVector a{target_, std::vector<std::uint8_t>(probs.size(), 0), 0.0};
  for (std::size_t attempt = 0; attempt <= config_.max_resample; ++attempt) {
    bool any = false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      a.keep[i] = unit(rng) < probs[i] ? 1 : 0;
      any = any || a.keep[i];
    }
    if (any) break;
  }
  if (kept_count(a) == 0 && !probs.empty()) {
    a.keep[static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin())] = 1;
  }
  a.log_prob = bernoulli_log_prob(probs, a.keep);
  return a;
}

std::vector<ActionVector> PruningAgent::sample_actions(const Tensor& input, std::size_t count,
                                                       std::uint64_t seed) const {
  const auto probs = probabilities(input);
  Rng rng(seed);
  std::vector<ActionVector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(probs, rng));
  return out;
}

ActionVector PruningAgent::mode_action(const Tensor& input) const {
  const auto probs = probabilities(input);
  ActionVector a{target_, std::vector<std::uint8_t>(probs.size(), 0), 0.0};
  for (std::size_t i = 0; i < probs.size(); ++i) a.keep[i] = probs[i] >= 0.5 ? 1 : 0;
  if (kept_count(a) == 0) {
    a.keep[static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin())] = 1;
  }
  a.log_prob = bernoulli_log_prob(probs, a.keep);
  return a;
}

double PruningAgent::accumulate_log_prob_grad(const Tensor& input,
                                              std::span<const ActionVector> actions,
                                              std::span<const double> weights) {
  if (actions.size() != weights.size()) throw ShapeError("one weight per action required");
  Tape tape;
  Var probs = forward(tape, input);
  Var total;
  bool first = true;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    Var term = scale(bernoulli_log_prob(probs, actions[i].keep), weights[i]);
    total = first ? term : add(total, term);
    first = false;
  }
  if (first) return 0.0;
  const double value = total.value()[0];
  tape.backward(total);
  return value;
}

PruningAgent build_agent(const PruneTarget& target, std::size_t filters, std::size_t in_channels,
                         std::size_t kernel_h, std::size_t kernel_w, const AgentConfig& config) {
  return PruningAgent(target, filters, in_channels, kernel_h, kernel_w, config);
}

PruningAgent build_agent(const ModelGraph& model, const PruneTarget& target,
                         const AgentConfig& config) {
  const ConvSpec& c = model.target_conv(target);
  return PruningAgent(target, c.out_channels, c.in_channels, c.kernel_h, c.kernel_w, config);
}

Tensor agent_input(const ModelGraph& model, const PruneTarget& target) {
  return PruningAgent::prepare_input(model.params.at(model.target_weight_name(target)).value);
}

double bernoulli_log_prob(std::span<const double> probs, std::span<const std::uint8_t> action) {
  if (probs.size() != action.size()) throw ShapeError("action/probability length mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    lp += action[i] ? std::log(probs[i]) : std::log1p(-probs[i]);
  }
  return lp;
}

}  // namespace fprune
