#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "fprune/autodiff.hpp"
#include "fprune/ops.hpp"

namespace fprune::testing {

// Scalar loss built from the parameters of `store` on a fresh tape.
using LossFn = std::function<Var(Tape&, ParamStore&)>;

inline double loss_value(const LossFn& fn, ParamStore& store) {
  Tape tape(false);
  return fn(tape, store).value()[0];
}

// Worst norm-relative error between backward() and central differences over
// every tensor of the store: |g - g_fd| / max(|g| + |g_fd|, floor).
inline double gradient_check(const LossFn& fn, ParamStore& store, double h = 1e-6,
                             double floor = 1e-7, std::string* worst = nullptr) {
  store.zero_grad();
  {
    Tape tape;
    Var loss = fn(tape, store);
    tape.backward(loss);
  }
  double max_rel = 0.0;
  for (auto& p : store.params()) {
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double keep = p.value[i];
      p.value[i] = keep + h;
      const double up = loss_value(fn, store);
      p.value[i] = keep - h;
      const double down = loss_value(fn, store);
      p.value[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad[i];
      diff += (analytic - numeric) * (analytic - numeric);
      norm_a += analytic * analytic;
      norm_n += numeric * numeric;
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(norm_a) + std::sqrt(norm_n), floor);
    if (rel > max_rel) {
      max_rel = rel;
      if (worst) *worst = p.name;
    }
  }
  return max_rel;
}

// Reduces any tensor-valued output to a scalar through a fixed random
// projection so every output element carries a distinct weight.
inline Var project(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  Var w = tape.constant(Tensor::randn(out.shape(), rng));
  return sum(mul(out, w));
}

}  // namespace fprune::testing
