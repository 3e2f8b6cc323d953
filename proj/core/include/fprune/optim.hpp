#pragma once

#include "fprune/autodiff.hpp"

namespace fprune {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool zero_grad = false;
};

// One bias-corrected Adam step over every parameter of the store.
void adam_step(ParamStore& store, const AdamOptions& opt);

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  bool zero_grad = false;
};

// Heavy-ball SGD; the velocity lives in Parameter::moment1.
void sgd_step(ParamStore& store, const SgdOptions& opt);

}  // namespace fprune
