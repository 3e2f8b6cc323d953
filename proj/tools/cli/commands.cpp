#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fprune/checkpoint.hpp"
#include "fprune/errors.hpp"
#include "fprune/pipeline.hpp"
#include "fprune/report.hpp"
#include "fprune/surgery.hpp"
#include "fprune/training.hpp"

namespace fprune::cli {

namespace fs = std::filesystem;

Dataset load_dataset(const RunConfig& cfg) {
  const auto& d = cfg.data;
  const std::uint64_t ds = d.seed.value_or(derive_seed(cfg.seed, {0x64617461ULL}));
  Dataset out;
  LabeledImageSet pool;
  if (d.source == "synthetic") {
    Shape shape(d.image_shape.begin(), d.image_shape.end());
    pool = generate_synthetic(d.num_classes, d.per_class, shape, derive_seed(ds, {1}), d.noise);
    if (d.test_per_class > 0) {
      out.test = generate_synthetic(d.num_classes, d.test_per_class, shape, derive_seed(ds, {2}),
                                    d.noise);
      out.has_test = true;
    }
  } else {
    pool = load_idx(d.train_images, d.train_labels);
    if (!d.test_images.empty() || !d.test_labels.empty()) {
      out.test = load_idx(d.test_images, d.test_labels);
      out.has_test = true;
    }
  }
  auto split = holdout_split(pool, d.val_fraction, derive_seed(ds, {3}));
  out.train = std::move(split.train);
  out.val = std::move(split.val);
  if (out.has_test) {
    out.test.split = Split::test;
    if (out.test.image_shape() != out.train.image_shape()) {
      throw DataError("test images do not match the training image shape");
    }
    // idx files infer the class count from the largest label seen
    if (out.test.num_classes > out.train.num_classes) {
      throw DataError("test labels exceed the training classes");
    }
    out.test.num_classes = out.train.num_classes;
    out.val.num_classes = out.train.num_classes;
  }
  return out;
}

BaselineResult train_baseline(const RunConfig& cfg, const Dataset& data) {
  ToyCnnConfig tc;
  tc.widths = cfg.model.widths;
  if (cfg.model.planted_duplicates) {
    for (auto& w : tc.widths) w /= 2;
  }
  tc.num_classes = data.train.num_classes;
  tc.input_shape = data.train.image_shape();
  tc.kernel = cfg.model.kernel;
  tc.residual = cfg.model.residual;
  tc.coupled_residual = cfg.model.coupled_residual;
  tc.seed = derive_seed(cfg.seed, {0x6d6f64656cULL});
  BaselineResult r{build_toy_cnn(tc), 0.0, std::numeric_limits<double>::quiet_NaN()};
  TrainOptions opt;
  opt.epochs = cfg.baseline.epochs;
  opt.batch_size = cfg.baseline.batch_size;
  opt.lr = cfg.baseline.lr;
  opt.momentum = cfg.baseline.momentum;
  opt.weight_decay = cfg.baseline.weight_decay;
  opt.seed = derive_seed(cfg.seed, {0x62617365ULL});
  if (opt.epochs > 0) train_epochs(r.model, data.train, opt);
  if (cfg.model.planted_duplicates) {
    for (const auto& t : r.model.prune_targets()) r.model = duplicate_filters(r.model, t);
  }
  // the checkpoint records the root seed everything else derives from
  r.model.meta.seed = cfg.seed;
  r.val_accuracy = evaluate_accuracy(r.model, data.val);
  if (data.has_test) r.test_accuracy = evaluate_accuracy(r.model, data.test);
  return r;
}

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = f.config_path.empty() ? RunConfig{} : load_config(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out_dir.empty()) cfg.output.dir = f.out_dir;
  validate(cfg);
  return cfg;
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

int cmd_train_baseline(const CommonFlags& flags, const std::string& checkpoint_flag,
                       std::ostream& out) {
  RunConfig cfg = resolve_config(flags);
  if (!checkpoint_flag.empty()) cfg.output.checkpoint = checkpoint_flag;
  const Dataset data = load_dataset(cfg);
  BaselineResult r = train_baseline(cfg, data);
  const fs::path ckpt = checkpoint_path(cfg);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  fs::create_directories(cfg.output.dir);
  save_checkpoint(r.model, ckpt);

  const auto cost = count_flops(r.model);
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["checkpoint"] = ckpt.string();
  j["val_accuracy"] = r.val_accuracy;
  j["test_accuracy"] = number_or_null(r.test_accuracy);
  j["params"] = cost.total_params;
  j["flops"] = cost.total_flops;
  j["prunable_filters"] = r.model.total_prunable_filters();
  j["train_samples"] = data.train.size();
  j["val_samples"] = data.val.size();
  j["test_samples"] = data.has_test ? data.test.size() : 0;
  write_text_file(fs::path(cfg.output.dir) / "baseline.json", j.dump(2) + "\n");
  write_text_file(fs::path(cfg.output.dir) / "config.json", config_to_json(cfg));
  out << "baseline: val " << r.val_accuracy << "%";
  if (data.has_test) out << ", test " << r.test_accuracy << "%";
  out << ", checkpoint " << ckpt.string() << "\n";
  return kOk;
}

struct PruneFlags {
  std::optional<std::size_t> layer;
  bool all = false;
  std::optional<double> bound;
  std::string method = "learned";
  std::string from_report;
  std::string keep_counts;
  std::string checkpoint;
  std::optional<std::size_t> workers;
  bool fixed_pstar = false;
  std::optional<std::size_t> max_epochs;
  std::string tag;
};

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      throw ConfigError("--keep-counts expects comma-separated integers, got '" + text + "'");
    }
    if (pos != item.size() || item.find('-') != std::string::npos) {
      throw ConfigError("--keep-counts expects comma-separated integers, got '" + text + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--keep-counts is empty");
  return out;
}

int cmd_prune(const CommonFlags& flags, const PruneFlags& pf, std::ostream& out) {
  RunConfig cfg = resolve_config(flags);
  if (pf.bound) cfg.reward.bound = *pf.bound;
  if (pf.workers) cfg.trainer.workers = *pf.workers;
  if (pf.max_epochs) cfg.trainer.max_epochs = *pf.max_epochs;
  if (pf.fixed_pstar) cfg.pipeline.fixed_pstar = true;
  if (pf.layer && pf.all) throw ConfigError("--layer and --all are mutually exclusive");
  if (pf.layer) cfg.pipeline.layers = {*pf.layer};
  if (pf.all) cfg.pipeline.layers.clear();
  validate(cfg);
  const PruneMethod method = parse_prune_method(pf.method);
  if (method == PruneMethod::learned && (!pf.from_report.empty() || !pf.keep_counts.empty())) {
    throw ConfigError("--from-report/--keep-counts only apply to --method l1|random");
  }
  if (method != PruneMethod::learned) {
    if (pf.from_report.empty() == pf.keep_counts.empty()) {
      throw ConfigError("--method " + pf.method +
                        " needs exactly one of --from-report or --keep-counts");
    }
  }

  const fs::path ckpt = pf.checkpoint.empty() ? fs::path(checkpoint_path(cfg)) : fs::path(pf.checkpoint);
  const ModelGraph model = load_checkpoint(ckpt);
  const Dataset data = load_dataset(cfg);
  if (model.meta.input_shape != data.train.image_shape() ||
      model.meta.num_classes != data.train.num_classes) {
    throw DataError("checkpoint does not match the configured dataset");
  }
  const auto units = model.prune_targets().size();
  for (auto u : cfg.pipeline.layers) {
    if (u >= units) {
      throw ConfigError("layer index " + std::to_string(u) + " out of range; the model has " +
                        std::to_string(units) + " prunable layers");
    }
  }

  const PruneRunConfig prc = make_prune_config(cfg);
  const LabeledImageSet* test = data.has_test ? &data.test : nullptr;
  PruneResult result = [&] {
    if (method == PruneMethod::learned) return prune_network(model, data.train, data.val, test, prc);
    const auto counts = pf.keep_counts.empty()
                            ? keep_counts_from_report(model, load_report(pf.from_report))
                            : parse_counts(pf.keep_counts);
    if (method == PruneMethod::l1) {
      return prune_l1_baseline(model, counts, data.train, data.val, test, prc);
    }
    return prune_random_baseline(model, counts, derive_seed(cfg.seed, {0x72616e64ULL}), data.train,
                                 data.val, test, prc);
  }();

  const std::string stem = pf.tag.empty() ? to_string(method) : pf.tag;
  const fs::path dir = cfg.output.dir;
  write_prune_outputs(dir, stem, result.report, result.logs);
  save_checkpoint(result.model, dir / (stem + ".fpck"));
  const auto& r = result.report;
  out << stem << ": filters removed " << r.filter_prune_ratio << "%, params removed "
      << r.prune_ratio << "%, saved FLOPs " << r.saved_flops << "%, val drop " << r.val_drop;
  if (test) out << ", test drop " << r.test_drop;
  out << "\nreport " << (dir / (stem + ".json")).string() << "\n";
  return kOk;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& csv_path,
               std::ostream& out) {
  if (paths.empty()) throw ConfigError("report needs at least one report file");
  std::vector<PruneReport> reports;
  std::vector<std::string> labels;
  for (const auto& p : paths) {
    reports.push_back(load_report(p));
    labels.push_back(fs::path(p).stem().string());
  }
  out << comparison_table(reports, labels);
  const std::string csv = comparison_csv(reports, labels);
  if (csv_path.empty()) {
    out << "\n" << csv;
  } else {
    write_text_file(csv_path, csv);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Filter pruning with learned per-layer agents", "fprune"};
  app.require_subcommand(1);

  CommonFlags common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "run configuration (JSON)");
    sub->add_option("--seed", common.seed, "root seed (overrides the config)");
    sub->add_option("--out", common.out_dir, "output directory (overrides the config)");
  };

  auto* defaults = app.add_subcommand("defaults", "print the default configuration");

  auto* baseline = app.add_subcommand("train-baseline", "train the toy CNN and write a checkpoint");
  add_common(baseline);
  std::string baseline_ckpt;
  baseline->add_option("--checkpoint", baseline_ckpt, "checkpoint path to write");

  auto* prune = app.add_subcommand("prune", "prune a trained checkpoint");
  add_common(prune);
  PruneFlags pf;
  prune->add_option("--layer", pf.layer, "prune only this prunable layer (0-based)");
  prune->add_flag("--all", pf.all, "prune every prunable layer, low to high");
  prune->add_option("--bound", pf.bound, "tolerated validation accuracy drop (points)");
  prune->add_option("--method", pf.method, "learned | l1 | random");
  prune->add_option("--from-report", pf.from_report, "take keep counts from a learned report");
  prune->add_option("--keep-counts", pf.keep_counts, "comma-separated keep count per layer");
  prune->add_option("--checkpoint", pf.checkpoint, "baseline checkpoint to prune");
  prune->add_option("--rollout-workers", pf.workers, "threads for rollout evaluation (0 = cores)");
  prune->add_flag("--fixed-pstar", pf.fixed_pstar, "score every layer against the unpruned accuracy");
  prune->add_option("--max-epochs", pf.max_epochs, "agent training epochs per layer");
  prune->add_option("--tag", pf.tag, "output file stem (default: method name)");

  auto* report = app.add_subcommand("report", "compare prune reports");
  std::vector<std::string> report_paths;
  std::string report_csv;
  report->add_option("reports", report_paths, "report JSON files");
  report->add_option("--csv", report_csv, "write the comparison CSV here");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (defaults->parsed()) {
      out << config_to_json(RunConfig{});
      return kOk;
    }
    if (baseline->parsed()) return cmd_train_baseline(common, baseline_ckpt, out);
    if (prune->parsed()) return cmd_prune(common, pf, out);
    if (report->parsed()) return cmd_report(report_paths, report_csv, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace fprune::cli
