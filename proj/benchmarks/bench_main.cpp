#include <benchmark/benchmark.h>

#include "fprune/agent.hpp"
#include "fprune/ops.hpp"
#include "fprune/reinforce.hpp"
#include "fprune/surgery.hpp"

using namespace fprune;

namespace {

ModelGraph bench_net() {
  ToyCnnConfig c;
  c.widths = {16, 16, 32};
  c.num_classes = 10;
  c.input_shape = {1, 16, 16};
  c.seed = 1;
  return build_toy_cnn(c);
}

void BM_Conv2dForward(benchmark::State& st) {
  const auto ch = static_cast<std::size_t>(st.range(0));
  Rng rng(1);
  const Tensor x = Tensor::randn({32, ch, 16, 16}, rng), w = Tensor::randn({ch, ch, 3, 3}, rng),
               b = Tensor::randn({ch}, rng);
  for (auto _ : st) {
    Tape t(false);
    benchmark::DoNotOptimize(conv2d(t.constant(x), t.constant(w), t.constant(b), {1, 1}).value()[0]);
  }
  st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& st) {
  const auto ch = static_cast<std::size_t>(st.range(0));
  Rng rng(2);
  ParamStore ps;
  ps.add("x", Tensor::randn({32, ch, 16, 16}, rng));
  ps.add("w", Tensor::randn({ch, ch, 3, 3}, rng));
  ps.add("b", Tensor::randn({ch}, rng));
  auto &x = ps.at("x"), &w = ps.at("w"), &b = ps.at("b");
  for (auto _ : st) {
    Tape t;
    Var y = conv2d(t.param(x), t.param(w), t.param(b), {1, 1});
    t.backward(sum(y));
    ps.zero_grad();
  }
  st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(16)->Arg(32);

void BM_ModelForward(benchmark::State& st) {
  const auto m = bench_net();
  Rng rng(3);
  const Tensor x = Tensor::uniform({64, 1, 16, 16}, rng, 0, 1);
  for (auto _ : st) benchmark::DoNotOptimize(m.logits(x)[0]);
  st.SetItemsProcessed(st.iterations() * 64);
}
BENCHMARK(BM_ModelForward);

void BM_Surgery(benchmark::State& st) {
  const auto m = bench_net();
  const PruneTarget t = m.prune_targets()[1];
  ActionVector a = keep_all(m, t);
  for (std::size_t i = 0; i < a.keep.size(); i += 2) a.keep[i] = 0;
  for (auto _ : st) benchmark::DoNotOptimize(apply_action(m, a).params.size());
}
BENCHMARK(BM_Surgery);

void BM_AgentForward(benchmark::State& st) {
  const auto m = bench_net();
  const PruneTarget t = m.prune_targets()[static_cast<std::size_t>(st.range(0))];
  const auto agent = build_agent(m, t);
  const auto in = agent_input(m, t);
  st.SetLabel(to_string(agent.architecture()));
  for (auto _ : st) benchmark::DoNotOptimize(agent.probabilities(in)[0]);
}
BENCHMARK(BM_AgentForward)->Arg(0)->Arg(1)->Arg(2);

void BM_PolicyGradientEpoch(benchmark::State& st) {
  const auto m = bench_net();
  const PruneTarget t = m.prune_targets()[1];
  auto agent = build_agent(m, t);
  const auto in = agent_input(m, t);
  Rng rng(4);
  const auto p = agent.probabilities(in);
  std::vector<RolloutRecord> recs(5);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].action = agent.sample(p, rng);
    recs[i].normalized_reward = static_cast<double>(i) - 2.0;
  }
  for (auto _ : st) benchmark::DoNotOptimize(policy_gradient(agent, in, recs).size());
}
BENCHMARK(BM_PolicyGradientEpoch);

}  // namespace

BENCHMARK_MAIN();
