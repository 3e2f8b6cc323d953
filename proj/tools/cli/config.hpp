#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fprune/pipeline.hpp"

namespace fprune::cli {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | idx
  // Data draw seed; derived from the root seed when absent.
  std::optional<std::uint64_t> seed;
  std::size_t num_classes = 10;
  std::size_t per_class = 300;
  std::size_t test_per_class = 50;
  std::vector<std::size_t> image_shape{1, 16, 16};
  double noise = 0.15;
  double val_fraction = 0.1;
  std::string train_images, train_labels, test_images, test_labels;
};

struct ModelConfig {
  std::vector<std::size_t> widths{16, 16, 32};
  std::size_t kernel = 3;
  bool residual = false;
  bool coupled_residual = false;
  // Train at half width, then append an exact copy of every filter.
  bool planted_duplicates = true;
};

struct BaselineConfig {
  std::size_t epochs = 4;
  std::size_t batch_size = 32;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

struct RewardSection {
  double bound = 2.0;
  std::size_t rollout_epochs = 1;
  std::size_t rollout_samples = 256;
  std::size_t rollout_batch_size = 32;
  double rollout_lr = 0.02;
};

struct TrainerSection {
  std::size_t rollouts = 5;
  double lr = 0.01;
  std::size_t max_epochs = 300;
  std::size_t window = 50;
  double tolerance = 1e-3;
  bool stop_on_convergence = true;
  bool cache_rewards = true;
  std::size_t workers = 0;
  double initial_keep_prob = 0.8;
  std::size_t conv_threshold = 16;
  std::size_t hidden = 64;
  std::vector<std::size_t> conv_channels{8, 16, 32, 32};
  std::size_t conv_kernel = 7;
};

struct PipelineSection {
  std::size_t finetune_epochs = 2;
  std::size_t finetune_batch_size = 32;
  double finetune_lr = 0.02;
  bool fixed_pstar = false;
  std::vector<std::size_t> layers;  // empty = all
  TimingOptions timing;
};

struct OutputConfig {
  std::string dir = "fprune-out";
  std::string checkpoint;  // empty = <dir>/baseline.fpck
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  BaselineConfig baseline;
  RewardSection reward;
  TrainerSection trainer;
  PipelineSection pipeline;
  OutputConfig output;
};

// Rejects unknown keys at every level and wrong value types; the message
// names the offending key path. Throws ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& cfg);
void validate(const RunConfig& cfg);

std::string checkpoint_path(const RunConfig& cfg);
PruneRunConfig make_prune_config(const RunConfig& cfg);

}  // namespace fprune::cli
