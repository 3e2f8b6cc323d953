// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.
#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "fprune/checkpoint.hpp"
#include "fprune/ops.hpp"
#include "fprune/pipeline.hpp"
#include "fprune/reinforce.hpp"
#include "fprune/report.hpp"
#include "fprune/reward.hpp"
#include "fprune/surgery.hpp"
#include "json.hpp"
#include "reinforce_oracle.hpp"
#include "surgery_oracle.hpp"
#include "test_support.hpp"

using namespace fprune;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("fprune_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << "  fprune";
  if (code != 0) {
    for (const auto& a : args) std::cerr << ' ' << a;
    std::cerr << " -> " << code << "\n" << err.str();
  }
  return code;
}

// ---------------------------------------------------------------- 1

Verdict gradients() {
  using fprune::testing::gradient_check;
  using fprune::testing::project;
  double worst = 0.0;
  std::string worst_case;
  std::size_t checks = 0;
  auto record = [&](double rel, const std::string& what, std::uint64_t seed) {
    ++checks;
    if (rel > worst) {
      worst = rel;
      worst_case = what + " seed " + std::to_string(seed);
    }
  };
  auto jitter = [](ParamStore& s, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& p : s.params())
      if (p.name.ends_with("bias")) p.value = Tensor::randn(p.value.shape(), rng, 0.2);
  };

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 1000);
    {
      const std::size_t stride = 1 + seed % 2, pad = seed % 3, k = 1 + 2 * (seed % 3);
      ParamStore s;
      s.add("x", Tensor::randn({2, 2, 7, 6}, rng));
      s.add("w", Tensor::randn({3, 2, k, k}, rng));
      s.add("b", Tensor::randn({3}, rng));
      auto fn = [&](Tape& t, ParamStore& ps) {
        return project(t, conv2d(t.param(ps.at("x")), t.param(ps.at("w")), t.param(ps.at("b")), {stride, pad}), seed);
      };
      record(gradient_check(fn, s), "conv2d", seed);
    }
    {
      ParamStore s;
      s.add("x", Tensor::randn({2, 3, 5 + seed % 3, 6}, rng));
      const std::size_t wh = 1 + seed % 2;
      auto fn = [&](Tape& t, ParamStore& ps) { return project(t, max_pool2d(t.param(ps.at("x")), wh, 2), seed); };
      record(gradient_check(fn, s), "max_pool2d", seed);
    }
    {
      ParamStore s;
      s.add("x", Tensor::randn({3, 5}, rng));
      s.add("w", Tensor::randn({4, 5}, rng));
      s.add("b", Tensor::randn({4}, rng));
      auto fn = [&](Tape& t, ParamStore& ps) {
        return project(t, linear(t.param(ps.at("x")), t.param(ps.at("w")), t.param(ps.at("b"))), seed);
      };
      record(gradient_check(fn, s), "linear", seed);
    }
    {
      ParamStore s;
      s.add("a", Tensor::randn({3, 4}, rng));
      s.add("b", Tensor::randn({3, 4}, rng));
      auto fn = [&](Tape& t, ParamStore& ps) {
        Var a = t.param(ps.at("a")), b = t.param(ps.at("b"));
        Var y = add(mul(relu(a), sigmoid(b)), scale(clamp(a, -0.7, 0.9), 1.7));
        return project(t, flatten(reshape(y, {2, 6})), seed);
      };
      record(gradient_check(fn, s), "elementwise", seed);
    }
    {
      ParamStore s;
      s.add("z", Tensor::randn({3, 5}, rng, 3.0));
      const std::vector<int> labels{static_cast<int>(seed % 5), 1, static_cast<int>((seed + 3) % 5)};
      auto fn = [&](Tape& t, ParamStore& ps) { return softmax_cross_entropy(t.param(ps.at("z")), labels); };
      record(gradient_check(fn, s), "softmax_cross_entropy", seed);
    }
    {
      ParamStore s;
      s.add("z", Tensor::randn({6}, rng));
      std::vector<std::uint8_t> a(6);
      for (auto& v : a) v = rng() & 1;
      auto fn = [&](Tape& t, ParamStore& ps) { return bernoulli_log_prob(sigmoid(t.param(ps.at("z"))), a); };
      record(gradient_check(fn, s), "bernoulli_log_prob", seed);
    }
    for (bool conv : {false, true}) {
      AgentConfig cfg;
      cfg.seed = seed;
      cfg.conv_channels = {2, 3, 2, 2};
      cfg.hidden = 5;
      cfg.output_weight_scale = 0.5;
      cfg.initial_keep_prob = 0.6;
      const std::size_t n = 3 + seed % 4, m = conv ? 2 : 1;
      PruningAgent agent({0, ConvSlot::first}, n, m, 3, 3, cfg);
      for (auto& p : agent.params().params())
        if (p.name.ends_with("bias")) p.value += Tensor::randn(p.value.shape(), rng, 0.2);
      const auto in = PruningAgent::prepare_input(Tensor::randn({n, m, 3, 3}, rng));
      const auto act = agent.sample(agent.probabilities(in), rng);
      auto fn = [&](Tape& t, ParamStore&) { return bernoulli_log_prob(agent.forward(t, in), act.keep); };
      record(gradient_check(fn, agent.params()), conv ? "conv-agent" : "fc-agent", seed);
    }
    for (bool residual : {false, true}) {
      ToyCnnConfig c;
      c.widths = residual ? std::vector<std::size_t>{3, 2} : std::vector<std::size_t>{3, 2};
      c.num_classes = 3;
      c.input_shape = {residual ? 2u : 1u, 6, 6};
      c.residual = residual;
      c.coupled_residual = residual;
      c.seed = seed;
      auto model = build_toy_cnn(c);
      jitter(model.params, seed + 7);
      const Tensor x = Tensor::uniform({2, c.input_shape[0], 6, 6}, rng, 0, 1);
      const std::vector<int> labels{static_cast<int>(seed % 3), static_cast<int>((seed + 1) % 3)};
      auto fn = [&](Tape& t, ParamStore&) { return softmax_cross_entropy(model.forward(t, t.constant(x)), labels); };
      record(gradient_check(fn, model.params), residual ? "residual toy CNN" : "plain toy CNN", seed);
    }
  }
  return {worst < 1e-4, std::to_string(checks) + " checks over 20 seeds, worst rel err " + fmt(worst) +
                            " (" + worst_case + ")"};
}

// ---------------------------------------------------------------- 2

Verdict surgery() {
  Rng rng(2024);
  double worst = 0.0;
  std::size_t pairs = 0, fc_boundary = 0, residual = 0;
  while (pairs < 60) {
    auto m = fprune::testing::random_net(rng);
    const auto targets = m.prune_targets();
    if (targets.empty()) continue;
    const auto t = targets[rng() % targets.size()];
    const auto a = fprune::testing::random_action(m, t, rng);
    const auto& in = m.meta.input_shape;
    const Tensor x = Tensor::uniform({3, in[0], in[1], in[2]}, rng, -1, 1);
    const auto pruned = apply_action(m, a);
    worst = std::max(worst, max_abs_diff(fprune::testing::plain_logits(pruned, x),
                                         fprune::testing::masked_logits(m, a, x)));
    ++pairs;
    if (t == targets.back()) ++fc_boundary;
    if (m.layers[t.layer].kind == LayerKind::residual) ++residual;
  }
  const bool covered = fc_boundary > 0 && residual > 0;
  return {worst < 1e-9 && covered,
          std::to_string(pairs) + " pairs (" + std::to_string(fc_boundary) + " at the conv/fc boundary, " +
              std::to_string(residual) + " inside residual blocks), max |diff| " + fmt(worst)};
}

// ---------------------------------------------------------------- 3

Verdict reward_fixtures() {
  bool ok = true;
  std::vector<std::string> failed;
  auto expect = [&](bool cond, const char* what) {
    if (!cond) {
      ok = false;
      failed.push_back(what);
    }
  };
  expect(accuracy_term(92.5, 92.5, 2.0) == 1.0, "psi at zero drop");
  expect(accuracy_term(90.5, 92.5, 2.0) == 0.0, "psi at drop = b");
  expect(accuracy_term(80.0, 80.0, 0.5) == 1.0, "psi at zero drop, b=0.5");
  expect(accuracy_term(79.5, 80.0, 0.5) == 0.0, "psi at drop = b, b=0.5");
  for (std::size_t n : {1u, 8u, 64u, 512u}) expect(efficiency_term(n, n) == 0.0, "phi at C=N");
  expect(efficiency_term(64, 16) == std::log(4.0), "phi at N/C=4");
  expect(efficiency_term(8, 2) == std::log(4.0), "phi at N/C=4 (8/2)");

  Rng rng(33);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_mean = 0.0, worst_sd = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(2 + trial % 15);
    const double s = std::exp(3.0 * g(rng)), off = 100.0 * g(rng);
    for (auto& v : r) v = off + s * g(rng);
    const auto z = normalize_rewards(r);
    double mean = 0.0, sq = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(z.size());
    for (double v : z) sq += (v - mean) * (v - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_sd = std::max(worst_sd, std::abs(std::sqrt(sq / static_cast<double>(z.size())) - 1.0));
  }
  expect(worst_mean < 1e-9, "normalized mean");
  expect(worst_sd < 1e-9, "normalized std");
  std::string detail = "closed forms exact; 1000 batches: max |mean| " + fmt(worst_mean) + ", max |std-1| " +
                       fmt(worst_sd);
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {ok, detail};
}

// ---------------------------------------------------------------- 4

Verdict unbiasedness() {
  AgentConfig cfg;
  cfg.seed = 404;
  cfg.initial_keep_prob = 0.6;
  cfg.output_weight_scale = 0.8;
  PruningAgent agent({0, ConvSlot::first}, 3, 1, 3, 3, cfg);
  Rng rng(405);
  const auto input = PruningAgent::prepare_input(Tensor::randn({3, 1, 3, 3}, rng));
  // analytic reward: number of kept filters
  auto reward = [](std::size_t mask) { return static_cast<double>(std::popcount(mask)); };
  const std::size_t rollouts = 5, epochs = 10000;

  const auto exact = fprune::testing::exact_policy_gradient(agent, input, reward, rollouts);
  const auto stats = fprune::testing::sample_estimator(agent, input, reward, rollouts, epochs, 406, exact);

  double norm = 0.0;
  for (const auto& t : exact) for (double v : t.data()) norm += v * v;
  norm = std::sqrt(norm);
  const double proj_z = (stats.projection_mean - norm) / stats.projection_se;
  double worst_bias_z = 0.0;
  for (std::size_t j = 0; j < exact.back().size(); ++j) {
    worst_bias_z = std::max(worst_bias_z, std::abs(stats.mean.back()[j] - exact.back()[j]) /
                                              stats.std_error.back()[j]);
  }
  std::size_t inside = 0, total = 0;
  for (std::size_t k = 0; k < exact.size(); ++k)
    for (std::size_t i = 0; i < exact[k].size(); ++i) {
      if (stats.std_error[k][i] == 0.0) continue;
      ++total;
      if (std::abs(stats.mean[k][i] - exact[k][i]) <= 3.0 * stats.std_error[k][i]) ++inside;
    }
  const double frac = static_cast<double>(inside) / static_cast<double>(total);
  const bool pass = std::abs(proj_z) < 3.0 && worst_bias_z < 3.0 && frac >= 0.99;
  return {pass, std::to_string(epochs) + " epochs: |exact| = " + fmt(norm / stats.projection_se) +
                    " SE; along exact direction z=" + fmt(proj_z) +
                    ", output-bias max |z|=" + fmt(worst_bias_z) + ", " + std::to_string(inside) + "/" +
                    std::to_string(total) + " coordinates within 3 SE"};
}

// ---------------------------------------------------------------- 5

double moving_mean_kept(const TrainLog& log, std::size_t epoch, std::size_t window) {
  const std::size_t first = epoch > window ? epoch - window : 0;
  double s = 0.0;
  for (std::size_t e = first; e < epoch; ++e) s += log.epochs[e].mean_kept;
  return s / static_cast<double>(epoch - first);
}

Verdict convergence_trend() {
  int good = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cli::RunConfig cfg;
    cfg.seed = 500 + seed;
    const auto data = cli::load_dataset(cfg);
    const auto base = cli::train_baseline(cfg, data);
    const auto prc = cli::make_prune_config(cfg);
    RewardConfig rc;
    rc.bound = prc.bound;
    rc.finetune = prc.rollout_finetune;
    rc.finetune.seed = derive_seed(cfg.seed, {1});
    TrainerConfig tc = prc.trainer;
    tc.max_epochs = 300;
    tc.stop_on_convergence = false;
    tc.seed = derive_seed(cfg.seed, {2});
    tc.agent.seed = derive_seed(cfg.seed, {3});
    const auto target = base.model.prune_targets().front();
    const auto res = train_agent_one_layer(base.model, target, data.train, data.val, rc, tc);
    const double r50 = moving_average_reward(res.log, 50, 50), r300 = moving_average_reward(res.log, 300, 50);
    const double k50 = moving_mean_kept(res.log, 50, 50), k300 = moving_mean_kept(res.log, 300, 50);
    const bool ok = r300 > r50 && k300 < k50;
    good += ok;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " reward " + fmt(r50) +
              "->" + fmt(r300) + " kept " + fmt(k50) + "->" + fmt(k300) + " of " +
              std::to_string(base.model.filter_count(target));
  }
  return {good >= 4, std::to_string(good) + "/5 seeds improve: " + detail};
}

// ---------------------------------------------------------------- 6 and 8

struct PipelineRun {
  bool ok = false;
  fs::path dir;
};

PipelineRun run_pipeline(const std::string& name) {
  PipelineRun r{false, scratch_dir(name)};
  const auto out = r.dir.string();
  r.ok = cli({"train-baseline", "--out", out}) == 0 && cli({"prune", "--all", "--bound", "2", "--out", out}) == 0 &&
         cli({"prune", "--method", "random", "--from-report", (r.dir / "learned.json").string(), "--out", out}) == 0 &&
         cli({"prune", "--method", "l1", "--from-report", (r.dir / "learned.json").string(), "--out", out}) == 0;
  return r;
}

PipelineRun& first_run() {
  static PipelineRun run = run_pipeline("run_a");
  return run;
}

Verdict end_to_end() {
  const auto& run = first_run();
  if (!run.ok) return {false, "CLI run failed"};
  const auto base = nlohmann::json::parse(read_text_file(run.dir / "baseline.json"));
  const double base_val = base["val_accuracy"].get<double>(), base_test = base["test_accuracy"].get<double>();
  const auto rep = load_report(run.dir / "learned.json");
  const auto before = count_flops(load_checkpoint(run.dir / "baseline.fpck"));
  const auto after = count_flops(load_checkpoint(run.dir / "learned.fpck"));
  const double saved = 100.0 * (1.0 - static_cast<double>(after.total_flops) / static_cast<double>(before.total_flops));
  const double flops_rel = std::abs(saved - rep.saved_flops) / std::abs(saved);
  const bool counts_match = rep.flops_before == before.total_flops && rep.flops_after == after.total_flops;
  const bool pass = base_val >= 90.0 && base_test >= 90.0 && rep.filter_prune_ratio >= 25.0 && rep.val_drop <= 2.0 &&
                    counts_match && flops_rel <= 1e-12;
  return {pass, "baseline val " + fmt(base_val, 4) + "% test " + fmt(base_test, 4) + "%; filters removed " +
                    fmt(rep.filter_prune_ratio, 4) + "%, params removed " + fmt(rep.prune_ratio, 4) +
                    "%, saved FLOPs " + fmt(rep.saved_flops, 4) + "% (counter rel diff " + fmt(flops_rel) +
                    "), val drop " + fmt(rep.val_drop, 3) + ", test drop " + fmt(rep.test_drop, 3)};
}

nlohmann::json without_volatile(nlohmann::json j) {
  for (const char* k : {"time_before_ms", "time_after_ms", "checkpoint"}) j.erase(k);
  if (j.contains("output")) j["output"].erase("dir");
  return j;
}

Verdict determinism() {
  const auto& a = first_run();
  const auto b = run_pipeline("run_b");
  if (!a.ok || !b.ok) return {false, "CLI run failed"};
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  for (const auto& entry : fs::directory_iterator(a.dir)) {
    const auto name = entry.path().filename().string();
    const auto other = b.dir / name;
    if (!fs::exists(other)) {
      diffs.push_back(name + " missing");
      continue;
    }
    ++compared;
    const auto ta = read_text_file(entry.path()), tb = read_text_file(other);
    if (entry.path().extension() == ".json") {
      if (without_volatile(nlohmann::json::parse(ta)) != without_volatile(nlohmann::json::parse(tb))) diffs.push_back(name);
    } else if (name.ends_with(".csv") && !name.ends_with("_layers.csv") && name.find("_agent") == std::string::npos) {
      // summary CSV rows carry the wall-clock columns last
      auto strip = [](const std::string& s) {
        std::string out;
        std::istringstream in(s);
        for (std::string line; std::getline(in, line);) {
          for (int i = 0; i < 2; ++i) line = line.substr(0, line.rfind(','));
          out += line + "\n";
        }
        return out;
      };
      if (strip(ta) != strip(tb)) diffs.push_back(name);
    } else if (ta != tb) {
      diffs.push_back(name);
    }
  }
  std::string detail = std::to_string(compared) + " output files compared (timings excluded)";
  for (const auto& d : diffs) detail += "; differs: " + d;
  return {diffs.empty() && compared >= 10, detail};
}

// ---------------------------------------------------------------- 7

Verdict versus_baselines() {
  double sum_learned = 0.0, sum_random = 0.0, sum_l1 = 0.0;
  int inversions = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto dir = scratch_dir("seed" + std::to_string(seed));
    const auto d = dir.string(), s = std::to_string(700 + seed);
    const auto learned_json = (dir / "learned.json").string();
    if (cli({"train-baseline", "--seed", s, "--out", d}) != 0 ||
        cli({"prune", "--all", "--seed", s, "--out", d}) != 0 ||
        cli({"prune", "--method", "random", "--from-report", learned_json, "--seed", s, "--out", d}) != 0 ||
        cli({"prune", "--method", "l1", "--from-report", learned_json, "--seed", s, "--out", d}) != 0) {
      return {false, "CLI run failed for seed " + s};
    }
    const auto l = load_report(dir / "learned.json"), r = load_report(dir / "random.json"),
               m = load_report(dir / "l1.json");
    if (l.filters_after != r.filters_after) return {false, "ratios not matched for seed " + s};
    sum_learned += l.test_accuracy_after;
    sum_random += r.test_accuracy_after;
    sum_l1 += m.test_accuracy_after;
    if (l.test_accuracy_after < r.test_accuracy_after) ++inversions;
    detail += (seed ? "; " : "") + s + ": " + fmt(l.test_accuracy_after, 4) + " vs " + fmt(r.test_accuracy_after, 4) +
              " (l1 " + fmt(m.test_accuracy_after, 4) + ", filters removed " + fmt(l.filter_prune_ratio, 3) + "%)";
  }
  const bool pass = sum_learned >= sum_random && inversions <= 1;
  return {pass, "mean test acc learned " + fmt(sum_learned / 5, 4) + " random " + fmt(sum_random / 5, 4) + " l1 " +
                    fmt(sum_l1 / 5, 4) + ", inversions " + std::to_string(inversions) + "/5 [" + detail + "]"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", gradients},
      {"surgery equivalence", surgery},
      {"reward fixtures", reward_fixtures},
      {"policy-gradient unbiasedness", unbiasedness},
      {"convergence trend", convergence_trend},
      {"end-to-end pruning", end_to_end},
      {"learned vs random", versus_baselines},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.contains(i + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && v.pass;
    std::cout << "criterion " << i + 1 << " " << criteria[i].first << ": " << (v.pass ? "PASS" : "FAIL") << " - "
              << v.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return all ? 0 : 1;
}
