#include "fprune/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "fprune/errors.hpp"
#include "fprune/surgery.hpp"

namespace fprune {

std::string to_string(PruneMethod method) {
  switch (method) {
    case PruneMethod::learned: return "learned";
    case PruneMethod::l1: return "l1";
    case PruneMethod::random: return "random";
  }
  return "unknown";
}

PruneMethod parse_prune_method(const std::string& text) {
  if (text == "learned") return PruneMethod::learned;
  if (text == "l1") return PruneMethod::l1;
  if (text == "random") return PruneMethod::random;
  throw ConfigError("unknown prune method '" + text + "' (learned|l1|random)");
}

std::vector<std::size_t> l1_keep_indices(const Tensor& w, std::size_t keep) {
  const std::size_t n = w.dim(0);
  if (keep == 0 || keep > n) throw ConfigError("keep count must lie in [1, filters]");
  const std::size_t row = w.size() / n;
  std::vector<double> norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < row; ++j) norm[i] += std::abs(w.data()[i * row + j]);
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return norm[a] > norm[b]; });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> random_keep_indices(std::size_t filters, std::size_t keep, Rng& rng) {
  if (keep == 0 || keep > filters) throw ConfigError("keep count must lie in [1, filters]");
  std::vector<std::size_t> idx(filters);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates with explicit index arithmetic so the draw does not
  // depend on the standard library's shuffle.
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (filters - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> keep_counts_from_report(const ModelGraph& model, const PruneReport& report) {
  const auto targets = model.prune_targets();
  std::vector<std::size_t> counts;
  for (const auto& t : targets) counts.push_back(model.filter_count(t));
  for (const auto& l : report.layers) {
    if (l.unit >= targets.size() || !(targets[l.unit] == l.target)) {
      throw ConfigError("report layer " + std::to_string(l.unit) + " does not match the model");
    }
    if (l.original_filters != counts[l.unit]) {
      throw ConfigError("report layer " + std::to_string(l.unit) + " width does not match the model");
    }
    counts[l.unit] = l.kept_filters;
  }
  return counts;
}

double median_batch_ms(const ModelGraph& model, const Tensor& images, const TimingOptions& opt) {
  if (!opt.enabled) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(opt.batch_size, images.dim(0));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Shape shape = images.shape();
  shape[0] = n;
  const std::size_t per = images.size() / images.dim(0);
  Tensor batch(shape, std::vector<double>(images.data().begin(),
                                          images.data().begin() + static_cast<std::ptrdiff_t>(n * per)));
  for (std::size_t i = 0; i < opt.warmup; ++i) (void)model.logits(batch, n);
  std::vector<double> ms;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, opt.batches); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.logits(batch, n);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t m = ms.size();
  return m % 2 ? ms[m / 2] : 0.5 * (ms[m / 2 - 1] + ms[m / 2]);
}

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

const LabeledImageSet& timing_set(const LabeledImageSet& val, const LabeledImageSet* test) {
  return test ? *test : val;
}

void open_report(PruneReport& r, const ModelGraph& model, const LabeledImageSet& val,
                 const LabeledImageSet* test, const PruneRunConfig& cfg, const std::string& method) {
  r.method = method;
  r.bound = cfg.bound;
  r.seed = cfg.seed;
  const auto flops = count_flops(model);
  r.params_before = flops.total_params;
  r.flops_before = flops.total_flops;
  r.filters_before = model.total_prunable_filters();
  r.val_accuracy_before = evaluate_accuracy(model, val);
  r.test_accuracy_before = test ? evaluate_accuracy(model, *test) : nan();
  r.time_before_ms = median_batch_ms(model, timing_set(val, test).images, cfg.timing);
}

void close_report(PruneReport& r, const ModelGraph& model, const LabeledImageSet& val,
                  const LabeledImageSet* test, const PruneRunConfig& cfg) {
  const auto flops = count_flops(model);
  r.params_after = flops.total_params;
  r.flops_after = flops.total_flops;
  r.filters_after = model.total_prunable_filters();
  auto pct = [](double after, double before) {
    return before > 0 ? 100.0 * (1.0 - after / before) : 0.0;
  };
  r.prune_ratio = pct(static_cast<double>(r.params_after), static_cast<double>(r.params_before));
  r.saved_flops = pct(static_cast<double>(r.flops_after), static_cast<double>(r.flops_before));
  r.filter_prune_ratio =
      pct(static_cast<double>(r.filters_after), static_cast<double>(r.filters_before));
  r.val_accuracy_after = evaluate_accuracy(model, val);
  r.test_accuracy_after = test ? evaluate_accuracy(model, *test) : nan();
  r.val_drop = r.val_accuracy_before - r.val_accuracy_after;
  r.test_drop = r.test_accuracy_before - r.test_accuracy_after;
  r.time_after_ms = median_batch_ms(model, timing_set(val, test).images, cfg.timing);
}

std::vector<std::size_t> selected_units(const ModelGraph& model, const std::vector<std::size_t>& units) {
  const std::size_t n = model.prune_targets().size();
  std::vector<std::size_t> out = units;
  if (out.empty()) {
    out.resize(n);
    std::iota(out.begin(), out.end(), 0);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (auto u : out) {
    if (u >= n) {
      throw ConfigError("layer index " + std::to_string(u) + " out of range (model has " +
                        std::to_string(n) + " prunable layers)");
    }
  }
  return out;
}

void validate_run(const PruneRunConfig& cfg) {
  if (!(cfg.bound > 0.0) || !std::isfinite(cfg.bound)) throw ConfigError("bound must be positive");
}

// Applies `keep` to unit `u` of `model`, fine-tunes when anything was removed
// and appends the layer record.
void commit_layer(ModelGraph& model, std::size_t u, const std::vector<std::uint8_t>& keep,
                  const LabeledImageSet& train, const LabeledImageSet& val,
                  const PruneRunConfig& cfg, PruneReport& report, LayerPruneResult rec) {
  const PruneTarget target = model.prune_targets()[u];
  ActionVector action{target, keep, 0.0};
  rec.unit = u;
  rec.target = target;
  rec.original_filters = keep.size();
  rec.kept_filters = kept_count(action);
  rec.kept_indices = kept_indices(action);
  rec.ratio = 100.0 * (1.0 - static_cast<double>(rec.kept_filters) /
                                 static_cast<double>(rec.original_filters));
  if (rec.kept_filters < rec.original_filters) {
    model = apply_action(model, action);
    if (cfg.finetune.epochs > 0) {
      TrainOptions ft = cfg.finetune;
      ft.seed = derive_seed(cfg.seed, {0x66696e65ULL, u});
      train_epochs(model, train, ft);
    }
  }
  rec.val_accuracy = evaluate_accuracy(model, val);
  report.layers.push_back(std::move(rec));
}

PruneResult prune_with_selector(
    const ModelGraph& model, const std::vector<std::size_t>& keep_counts,
    const std::function<std::vector<std::size_t>(const ModelGraph&, std::size_t, std::size_t)>& pick,
    const LabeledImageSet& train, const LabeledImageSet& val, const LabeledImageSet* test,
    const PruneRunConfig& cfg, const std::string& method) {
  validate_run(cfg);
  const auto targets = model.prune_targets();
  if (keep_counts.size() != targets.size()) {
    throw ConfigError("expected " + std::to_string(targets.size()) + " keep counts, got " +
                      std::to_string(keep_counts.size()));
  }
  for (std::size_t u = 0; u < targets.size(); ++u) {
    if (keep_counts[u] == 0) throw ConfigError("keep count 0 for layer " + std::to_string(u));
    if (keep_counts[u] > model.filter_count(targets[u])) {
      throw ConfigError("keep count exceeds width for layer " + std::to_string(u));
    }
  }
  PruneResult out{model, {}, {}};
  open_report(out.report, model, val, test, cfg, method);
  for (std::size_t u = 0; u < targets.size(); ++u) {
    const std::size_t width = out.model.filter_count(targets[u]);
    if (keep_counts[u] == width) continue;
    std::vector<std::uint8_t> keep(width, 0);
    for (auto i : pick(out.model, u, keep_counts[u])) keep[i] = 1;
    commit_layer(out.model, u, keep, train, val, cfg, out.report, {});
  }
  close_report(out.report, out.model, val, test, cfg);
  return out;
}

}  // namespace

PruneResult prune_network(const ModelGraph& model, const LabeledImageSet& train,
                          const LabeledImageSet& val, const LabeledImageSet* test,
                          const PruneRunConfig& cfg) {
  validate_run(cfg);
  const auto units = selected_units(model, cfg.units);
  PruneResult out{model, {}, {}};
  open_report(out.report, model, val, test, cfg, "learned");
  const double initial_pstar = out.report.val_accuracy_before;
  double pstar = initial_pstar;

  for (auto u : units) {
    const PruneTarget target = out.model.prune_targets()[u];
    RewardConfig rc;
    rc.bound = cfg.bound;
    rc.baseline_accuracy = cfg.fixed_pstar ? initial_pstar : pstar;
    rc.finetune = cfg.rollout_finetune;
    rc.finetune.seed = derive_seed(cfg.seed, {0x726f6c6cULL, u});
    TrainerConfig tc = cfg.trainer;
    tc.seed = derive_seed(cfg.seed, {0x6167656eULL, u});
    tc.agent.seed = derive_seed(cfg.seed, {0x696e6974ULL, u});
    auto trained = train_agent_one_layer(out.model, target, train, val, rc, tc);

    LayerPruneResult rec;
    rec.pstar = *rc.baseline_accuracy;
    rec.agent_epochs = trained.log.epochs.size();
    rec.agent_converged = trained.log.converged;
    commit_layer(out.model, u, trained.final_action.keep, train, val, cfg, out.report, rec);
    pstar = out.report.layers.back().val_accuracy;
    out.logs.push_back(std::move(trained.log));
  }
  close_report(out.report, out.model, val, test, cfg);
  return out;
}

PruneResult prune_l1_baseline(const ModelGraph& model, const std::vector<std::size_t>& keep_counts,
                              const LabeledImageSet& train, const LabeledImageSet& val,
                              const LabeledImageSet* test, const PruneRunConfig& cfg) {
  auto pick = [](const ModelGraph& m, std::size_t u, std::size_t keep) {
    const auto t = m.prune_targets()[u];
    return l1_keep_indices(m.params.at(m.target_weight_name(t)).value, keep);
  };
  return prune_with_selector(model, keep_counts, pick, train, val, test, cfg, "l1");
}

PruneResult prune_random_baseline(const ModelGraph& model,
                                  const std::vector<std::size_t>& keep_counts, std::uint64_t seed,
                                  const LabeledImageSet& train, const LabeledImageSet& val,
                                  const LabeledImageSet* test, const PruneRunConfig& cfg) {
  auto pick = [seed](const ModelGraph& m, std::size_t u, std::size_t keep) {
    Rng rng(derive_seed(seed, {0x72616e64ULL, u}));
    return random_keep_indices(m.filter_count(m.prune_targets()[u]), keep, rng);
  };
  auto out = prune_with_selector(model, keep_counts, pick, train, val, test, cfg, "random");
  out.report.selection_seed = seed;
  return out;
}

}  // namespace fprune
