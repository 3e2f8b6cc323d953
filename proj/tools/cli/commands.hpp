#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"
#include "fprune/data.hpp"
#include "fprune/model.hpp"

namespace fprune::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kRuntimeError = 4 };

struct Dataset {
  LabeledImageSet train;
  LabeledImageSet val;
  LabeledImageSet test;
  bool has_test = false;
};

Dataset load_dataset(const RunConfig& cfg);

struct BaselineResult {
  ModelGraph model;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;  // NaN without a test split
};

// Builds and trains the toy CNN; with planted duplicates the network is
// trained at half width and every filter is then copied once.
BaselineResult train_baseline(const RunConfig& cfg, const Dataset& data);

// Full command-line entry point; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fprune::cli
