#include "fprune/optim.hpp"

#include <cmath>

namespace fprune {

namespace {

void check_shapes(const Parameter& p) {
  if (p.grad.shape() != p.value.shape() || p.moment1.shape() != p.value.shape() ||
      p.moment2.shape() != p.value.shape()) {
    throw ShapeError("parameter '" + p.name + "' has inconsistent gradient/state shapes");
  }
}

}  // namespace

void adam_step(ParamStore& store, const AdamOptions& opt) {
  ++store.step_count;
  const double t = static_cast<double>(store.step_count);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& p : store.params()) {
    check_shapes(p);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      double& m = p.moment1[i];
      double& v = p.moment2[i];
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
      p.value[i] -= opt.lr * (m / c1) / (std::sqrt(v / c2) + opt.eps);
    }
  }
  if (opt.zero_grad) store.zero_grad();
}

void sgd_step(ParamStore& store, const SgdOptions& opt) {
  for (auto& p : store.params()) {
    check_shapes(p);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + opt.weight_decay * p.value[i];
      double& vel = p.moment1[i];
      vel = opt.momentum * vel + g;
      p.value[i] -= opt.lr * vel;
    }
  }
  ++store.step_count;
  if (opt.zero_grad) store.zero_grad();
}

}  // namespace fprune
