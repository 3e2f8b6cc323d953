#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fprune/data.hpp"
#include "fprune/model.hpp"

namespace fprune {

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  // 0 trains on every sample; otherwise on a fixed, seeded subset of this size.
  std::size_t max_samples = 0;
  std::uint64_t seed = 0;
};

struct TrainStats {
  std::vector<double> epoch_loss;
};

// Mini-batch SGD with momentum on softmax cross-entropy. Optimizer state is
// reset on entry. Throws NumericError if the loss stops being finite.
TrainStats train_epochs(ModelGraph& model, const LabeledImageSet& data, const TrainOptions& opt);

std::vector<int> predict(const ModelGraph& model, const Tensor& images);

// Classification accuracy in percent.
double evaluate_accuracy(const ModelGraph& model, const LabeledImageSet& data);

}  // namespace fprune
