#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "fprune/autodiff.hpp"

namespace fprune {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// Output extent of a strided, padded window along one axis.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

// Cross-correlation. input [N,C,H,W], weight [K,C,kh,kw], bias [K].
Var conv2d(Var input, Var weight, Var bias, Conv2dGeometry geom = {});

// Max pooling with stride equal to the window; trailing rows/cols that do not
// fill a window are dropped.
Var max_pool2d(Var input, std::size_t window_h, std::size_t window_w);

// x [N,in], weight [out,in], bias [out] -> [N,out].
Var linear(Var x, Var weight, Var bias);

// Numerically stable logistic function.
double logistic(double v);

Var relu(Var x);
Var sigmoid(Var x);

// Gradient passes where lo <= x <= hi and is zero elsewhere.
Var clamp(Var x, double lo, double hi);

Var reshape(Var x, Shape shape);
// [N, ...] -> [N, prod(...)]
Var flatten(Var x);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);

// Mean cross-entropy of softmax(logits [N,K]) against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

// sum_i a_i log p_i + (1 - a_i) log(1 - p_i) for probabilities p and a 0/1
// action of the same length.
Var bernoulli_log_prob(Var probs, std::span<const std::uint8_t> action);

}  // namespace fprune
