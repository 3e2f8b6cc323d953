#include "fprune/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fprune/ops.hpp"
#include "fprune/optim.hpp"

namespace fprune {

TrainStats train_epochs(ModelGraph& model, const LabeledImageSet& data, const TrainOptions& opt) {
  TrainStats stats;
  if (opt.epochs == 0 || data.size() == 0) return stats;
  if (opt.batch_size == 0) throw ConfigError("batch_size must be >= 1");

  Rng rng(derive_seed(opt.seed, {0x747261696eULL}));
  std::vector<std::size_t> pool(data.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  if (opt.max_samples > 0 && opt.max_samples < pool.size()) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(opt.max_samples);
    std::sort(pool.begin(), pool.end());
  }

  model.params.reset_optimizer_state();
  model.params.zero_grad();
  const SgdOptions sgd{opt.lr, opt.momentum, opt.weight_decay, true};

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < pool.size(); start += opt.batch_size) {
      const std::size_t count = std::min(opt.batch_size, pool.size() - start);
      std::span<const std::size_t> idx(pool.data() + start, count);
      const auto labels = data.gather_labels(idx);
      Tape tape;
      Var x = tape.constant(data.gather_images(idx));
      Var loss = softmax_cross_entropy(model.forward(tape, x), labels);
      const double l = loss.value()[0];
      if (!std::isfinite(l)) throw NumericError("training loss became non-finite");
      total += l * static_cast<double>(count);
      tape.backward(loss);
      sgd_step(model.params, sgd);
    }
    stats.epoch_loss.push_back(total / static_cast<double>(pool.size()));
  }
  return stats;
}

std::vector<int> predict(const ModelGraph& model, const Tensor& images) {
  const Tensor z = model.logits(images);
  const std::size_t n = z.dim(0), k = z.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data().data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

double evaluate_accuracy(const ModelGraph& model, const LabeledImageSet& data) {
  if (data.size() == 0) return 0.0;
  const auto pred = predict(model, data.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace fprune
