#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fprune/errors.hpp"

namespace fprune::cli {

using Json = nlohmann::ordered_json;

namespace {

struct WrongType {};

// One walk over the config tree serves both directions; Reader pulls values
// out of JSON, Writer pushes them in.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void field(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
        dst = v.is_null() ? std::nullopt : std::optional<std::uint64_t>(read<std::uint64_t>(v));
      } else {
        dst = read<T>(v);
      }
    } catch (const WrongType&) {
      throw ConfigError("config key '" + where(key) + "' has the wrong type");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + where(key) + "' has the wrong type");
    }
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader child(j_.at(key), where(key));
    fn(child);
    child.finish();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + where(item.key()) + "'");
    }
  }

 private:
  template <typename T>
  static T read(const Json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw WrongType{};
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw WrongType{};
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw WrongType{};
      for (const auto& e : v) {
        if (!e.is_number_unsigned()) throw WrongType{};
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw WrongType{};
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw WrongType{};
    }
    return v.get<T>();
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(Json& j) : j_(j) {}

  template <typename T>
  void field(const char* key, T& v) {
    if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
      j_[key] = v ? Json(*v) : Json(nullptr);
    } else {
      j_[key] = v;
    }
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    Json child = Json::object();
    Writer w(child);
    fn(w);
    j_[key] = std::move(child);
  }

 private:
  Json& j_;
};

template <typename V>
void walk(V& v, RunConfig& c) {
  v.field("seed", c.seed);
  v.section("data", [&](auto& s) {
    s.field("source", c.data.source);
    s.field("seed", c.data.seed);
    s.field("num_classes", c.data.num_classes);
    s.field("per_class", c.data.per_class);
    s.field("test_per_class", c.data.test_per_class);
    s.field("image_shape", c.data.image_shape);
    s.field("noise", c.data.noise);
    s.field("val_fraction", c.data.val_fraction);
    s.field("train_images", c.data.train_images);
    s.field("train_labels", c.data.train_labels);
    s.field("test_images", c.data.test_images);
    s.field("test_labels", c.data.test_labels);
  });
  v.section("model", [&](auto& s) {
    s.field("widths", c.model.widths);
    s.field("kernel", c.model.kernel);
    s.field("residual", c.model.residual);
    s.field("coupled_residual", c.model.coupled_residual);
    s.field("planted_duplicates", c.model.planted_duplicates);
  });
  v.section("baseline", [&](auto& s) {
    s.field("epochs", c.baseline.epochs);
    s.field("batch_size", c.baseline.batch_size);
    s.field("lr", c.baseline.lr);
    s.field("momentum", c.baseline.momentum);
    s.field("weight_decay", c.baseline.weight_decay);
  });
  v.section("reward", [&](auto& s) {
    s.field("bound", c.reward.bound);
    s.field("rollout_epochs", c.reward.rollout_epochs);
    s.field("rollout_samples", c.reward.rollout_samples);
    s.field("rollout_batch_size", c.reward.rollout_batch_size);
    s.field("rollout_lr", c.reward.rollout_lr);
  });
  v.section("trainer", [&](auto& s) {
    s.field("rollouts", c.trainer.rollouts);
    s.field("lr", c.trainer.lr);
    s.field("max_epochs", c.trainer.max_epochs);
    s.field("window", c.trainer.window);
    s.field("tolerance", c.trainer.tolerance);
    s.field("stop_on_convergence", c.trainer.stop_on_convergence);
    s.field("cache_rewards", c.trainer.cache_rewards);
    s.field("workers", c.trainer.workers);
    s.field("initial_keep_prob", c.trainer.initial_keep_prob);
    s.field("conv_threshold", c.trainer.conv_threshold);
    s.field("hidden", c.trainer.hidden);
    s.field("conv_channels", c.trainer.conv_channels);
    s.field("conv_kernel", c.trainer.conv_kernel);
  });
  v.section("pipeline", [&](auto& s) {
    s.field("finetune_epochs", c.pipeline.finetune_epochs);
    s.field("finetune_batch_size", c.pipeline.finetune_batch_size);
    s.field("finetune_lr", c.pipeline.finetune_lr);
    s.field("fixed_pstar", c.pipeline.fixed_pstar);
    s.field("layers", c.pipeline.layers);
    s.section("timing", [&](auto& t) {
      t.field("enabled", c.pipeline.timing.enabled);
      t.field("warmup", c.pipeline.timing.warmup);
      t.field("batches", c.pipeline.timing.batches);
      t.field("batch_size", c.pipeline.timing.batch_size);
    });
  });
  v.section("output", [&](auto& s) {
    s.field("dir", c.output.dir);
    s.field("checkpoint", c.output.checkpoint);
  });
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Reader r(j, "");
  walk(r, cfg);
  r.finish();
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

std::string config_to_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  Json j = Json::object();
  Writer w(j);
  walk(w, copy);
  return j.dump(2) + "\n";
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.data.source != "synthetic" && c.data.source != "idx") {
    fail("data.source must be 'synthetic' or 'idx'");
  }
  if (c.data.source == "synthetic") {
    if (c.data.num_classes < 2) fail("data.num_classes must be >= 2");
    if (c.data.per_class < 2) fail("data.per_class must be >= 2");
    if (c.data.image_shape.size() != 3) fail("data.image_shape must be [C,H,W]");
    for (auto d : c.data.image_shape) {
      if (d == 0) fail("data.image_shape entries must be >= 1");
    }
    if (!(c.data.noise >= 0.0)) fail("data.noise must be >= 0");
  } else if (c.data.train_images.empty() || c.data.train_labels.empty()) {
    fail("data.train_images and data.train_labels are required for idx data");
  }
  if (!(c.data.val_fraction > 0.0 && c.data.val_fraction < 1.0)) {
    fail("data.val_fraction must lie in (0, 1)");
  }
  if (c.model.widths.size() < 2) fail("model.widths needs at least two entries");
  for (auto w : c.model.widths) {
    if (w < 2) fail("model.widths entries must be >= 2");
    if (c.model.planted_duplicates && w % 2) {
      fail("model.widths must be even when model.planted_duplicates is set");
    }
  }
  if (c.model.kernel == 0 || c.model.kernel % 2 == 0) fail("model.kernel must be odd");
  if (c.baseline.batch_size == 0) fail("baseline.batch_size must be >= 1");
  if (!(c.baseline.lr > 0.0)) fail("baseline.lr must be positive");
  if (!(c.reward.bound > 0.0) || !std::isfinite(c.reward.bound)) fail("reward.bound must be positive");
  if (c.reward.rollout_batch_size == 0) fail("reward.rollout_batch_size must be >= 1");
  if (!(c.reward.rollout_lr > 0.0)) fail("reward.rollout_lr must be positive");
  if (c.trainer.rollouts < 2) fail("trainer.rollouts must be >= 2");
  if (!(c.trainer.lr > 0.0)) fail("trainer.lr must be positive");
  if (c.trainer.window == 0) fail("trainer.window must be >= 1");
  if (!(c.trainer.initial_keep_prob > 0.0 && c.trainer.initial_keep_prob < 1.0)) {
    fail("trainer.initial_keep_prob must lie in (0, 1)");
  }
  if (c.trainer.hidden == 0) fail("trainer.hidden must be >= 1");
  if (c.trainer.conv_kernel == 0 || c.trainer.conv_kernel % 2 == 0) {
    fail("trainer.conv_kernel must be odd");
  }
  for (auto ch : c.trainer.conv_channels) {
    if (ch == 0) fail("trainer.conv_channels entries must be >= 1");
  }
  if (c.pipeline.finetune_batch_size == 0) fail("pipeline.finetune_batch_size must be >= 1");
  if (!(c.pipeline.finetune_lr > 0.0)) fail("pipeline.finetune_lr must be positive");
  if (c.pipeline.timing.batch_size == 0) fail("pipeline.timing.batch_size must be >= 1");
  if (c.output.dir.empty()) fail("output.dir must not be empty");
}

std::string checkpoint_path(const RunConfig& cfg) {
  if (!cfg.output.checkpoint.empty()) return cfg.output.checkpoint;
  return (std::filesystem::path(cfg.output.dir) / "baseline.fpck").string();
}

PruneRunConfig make_prune_config(const RunConfig& c) {
  PruneRunConfig p;
  p.bound = c.reward.bound;
  p.units = c.pipeline.layers;
  p.seed = c.seed;
  p.fixed_pstar = c.pipeline.fixed_pstar;
  p.timing = c.pipeline.timing;

  p.rollout_finetune.epochs = c.reward.rollout_epochs;
  p.rollout_finetune.max_samples = c.reward.rollout_samples;
  p.rollout_finetune.batch_size = c.reward.rollout_batch_size;
  p.rollout_finetune.lr = c.reward.rollout_lr;
  p.rollout_finetune.momentum = c.baseline.momentum;

  p.finetune.epochs = c.pipeline.finetune_epochs;
  p.finetune.batch_size = c.pipeline.finetune_batch_size;
  p.finetune.lr = c.pipeline.finetune_lr;
  p.finetune.momentum = c.baseline.momentum;
  p.finetune.weight_decay = c.baseline.weight_decay;

  TrainerConfig& t = p.trainer;
  t.rollouts = c.trainer.rollouts;
  t.lr = c.trainer.lr;
  t.max_epochs = c.trainer.max_epochs;
  t.window = c.trainer.window;
  t.tolerance = c.trainer.tolerance;
  t.stop_on_convergence = c.trainer.stop_on_convergence;
  t.cache_rewards = c.trainer.cache_rewards;
  t.workers = c.trainer.workers;
  t.agent.initial_keep_prob = c.trainer.initial_keep_prob;
  t.agent.conv_threshold = c.trainer.conv_threshold;
  t.agent.hidden = c.trainer.hidden;
  t.agent.conv_channels = c.trainer.conv_channels;
  t.agent.conv_kernel = c.trainer.conv_kernel;
  return p;
}

}  // namespace fprune::cli
