#include "fprune/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

namespace fprune {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

struct ConvDims {
  std::size_t n, c, h, w, k, kh, kw, ho, wo, stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

void im2col(const double* x, const ConvDims& d, double* col) {
  const long pad = static_cast<long>(d.pad);
  for (std::size_t ch = 0; ch < d.c; ++ch) {
    for (std::size_t ki = 0; ki < d.kh; ++ki) {
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        double* row = col + ((ch * d.kh + ki) * d.kw + kj) * d.pixels();
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * d.stride + ki) - pad;
          double* out = row + oy * d.wo;
          if (iy < 0 || iy >= static_cast<long>(d.h)) {
            std::fill(out, out + d.wo, 0.0);
            continue;
          }
          const double* in = x + (ch * d.h + static_cast<std::size_t>(iy)) * d.w;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * d.stride + kj) - pad;
            out[ox] = (ix < 0 || ix >= static_cast<long>(d.w)) ? 0.0 : in[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, double* dx) {
  const long pad = static_cast<long>(d.pad);
  for (std::size_t ch = 0; ch < d.c; ++ch) {
    for (std::size_t ki = 0; ki < d.kh; ++ki) {
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        const double* row = col + ((ch * d.kh + ki) * d.kw + kj) * d.pixels();
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * d.stride + ki) - pad;
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          double* out = dx + (ch * d.h + static_cast<std::size_t>(iy)) * d.w;
          const double* g = row + oy * d.wo;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * d.stride + kj) - pad;
            if (ix >= 0 && ix < static_cast<long>(d.w)) out[ix] += g[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  require(stride >= 1, "stride must be >= 1");
  require(in + 2 * pad >= kernel, "kernel extent " + std::to_string(kernel) +
                                      " exceeds padded input extent " +
                                      std::to_string(in + 2 * pad));
  return (in + 2 * pad - kernel) / stride + 1;
}

Var conv2d(Var input, Var weight, Var bias, Conv2dGeometry geom) {
  Tape& tape = *input.tape;
  const Tensor& x = input.value();
  const Tensor& wt = weight.value();
  const Tensor& b = bias.value();
  require(x.rank() == 4, "conv2d input must be [N,C,H,W], got " + shape_string(x.shape()));
  require(wt.rank() == 4, "conv2d weight must be [K,C,kh,kw], got " + shape_string(wt.shape()));
  require(x.dim(1) == wt.dim(1), "conv2d channel mismatch: input " + shape_string(x.shape()) +
                                     " vs weight " + shape_string(wt.shape()));
  require(b.rank() == 1 && b.dim(0) == wt.dim(0),
          "conv2d bias must be [" + std::to_string(wt.dim(0)) + "], got " +
              shape_string(b.shape()));

  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), wt.dim(0), wt.dim(2), wt.dim(3), 0, 0,
             geom.stride, geom.pad};
  d.ho = conv_output_extent(d.h, d.kh, d.stride, d.pad);
  d.wo = conv_output_extent(d.w, d.kw, d.stride, d.pad);

  Tensor out({d.n, d.k, d.ho, d.wo});
  std::vector<double> col(d.patch() * d.pixels());
  ConstMatMap wmat(wt.data().data(), static_cast<long>(d.k), static_cast<long>(d.patch()));
  Eigen::Map<const Eigen::VectorXd> bvec(b.data().data(), static_cast<long>(d.k));
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(x.data().data() + n * d.c * d.h * d.w, d, col.data());
    ConstMatMap cmat(col.data(), static_cast<long>(d.patch()), static_cast<long>(d.pixels()));
    MatMap omat(out.data().data() + n * d.k * d.pixels(), static_cast<long>(d.k),
                static_cast<long>(d.pixels()));
    omat.noalias() = wmat * cmat;
    omat.colwise() += bvec;
  }

  const bool needs = tape.requires_grad(input) || tape.requires_grad(weight) ||
                     tape.requires_grad(bias);
  return tape.record(std::move(out), needs, [input, weight, bias, d](Tape& t, const Tensor& up) {
    const Tensor& x = t.value(input);
    const Tensor& wt = t.value(weight);
    const bool gx = t.requires_grad(input), gw = t.requires_grad(weight),
               gb = t.requires_grad(bias);
    std::vector<double> col(d.patch() * d.pixels());
    RowMatrix dw = RowMatrix::Zero(static_cast<long>(d.k), static_cast<long>(d.patch()));
    Eigen::VectorXd db = Eigen::VectorXd::Zero(static_cast<long>(d.k));
    Tensor dx;
    if (gx) dx = Tensor(x.shape());
    ConstMatMap wmat(wt.data().data(), static_cast<long>(d.k), static_cast<long>(d.patch()));
    for (std::size_t n = 0; n < d.n; ++n) {
      ConstMatMap g(up.data().data() + n * d.k * d.pixels(), static_cast<long>(d.k),
                    static_cast<long>(d.pixels()));
      if (gb) db += g.rowwise().sum();
      if (gw) {
        im2col(x.data().data() + n * d.c * d.h * d.w, d, col.data());
        ConstMatMap cmat(col.data(), static_cast<long>(d.patch()), static_cast<long>(d.pixels()));
        dw.noalias() += g * cmat.transpose();
      }
      if (gx) {
        MatMap dcol(col.data(), static_cast<long>(d.patch()), static_cast<long>(d.pixels()));
        dcol.noalias() = wmat.transpose() * g;
        col2im_add(col.data(), d, dx.data().data() + n * d.c * d.h * d.w);
      }
    }
    if (gx) t.accumulate(input, dx);
    if (gw) t.accumulate(weight, Tensor(wt.shape(), std::vector<double>(dw.data(), dw.data() + dw.size())));
    if (gb) t.accumulate(bias, Tensor({d.k}, std::vector<double>(db.data(), db.data() + db.size())));
  });
}

Var max_pool2d(Var input, std::size_t window_h, std::size_t window_w) {
  Tape& tape = *input.tape;
  const Tensor& x = input.value();
  require(x.rank() == 4, "max_pool2d input must be [N,C,H,W], got " + shape_string(x.shape()));
  require(window_h >= 1 && window_w >= 1, "pool window must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / window_h, wo = w / window_w;
  require(ho >= 1 && wo >= 1, "pool window larger than input " + shape_string(x.shape()));

  Tensor out({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + oy * window_h * w + ox * window_w;
        for (std::size_t i = 0; i < window_h; ++i) {
          for (std::size_t j = 0; j < window_w; ++j) {
            const std::size_t idx = base + (oy * window_h + i) * w + ox * window_w + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  return tape.record(std::move(out), tape.requires_grad(input),
                     [input, argmax](Tape& t, const Tensor& up) {
                       Tensor dx(t.value(input).shape());
                       for (std::size_t i = 0; i < up.size(); ++i) dx[(*argmax)[i]] += up[i];
                       t.accumulate(input, dx);
                     });
}

Var linear(Var x, Var weight, Var bias) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require(xv.rank() == 2, "linear input must be [N,in], got " + shape_string(xv.shape()));
  require(wv.rank() == 2 && wv.dim(1) == xv.dim(1),
          "linear weight " + shape_string(wv.shape()) + " does not match input " +
              shape_string(xv.shape()));
  require(bv.rank() == 1 && bv.dim(0) == wv.dim(0),
          "linear bias must be [" + std::to_string(wv.dim(0)) + "], got " +
              shape_string(bv.shape()));
  const long n = static_cast<long>(xv.dim(0)), in = static_cast<long>(xv.dim(1)),
             outd = static_cast<long>(wv.dim(0));
  Tensor out({xv.dim(0), wv.dim(0)});
  ConstMatMap xm(xv.data().data(), n, in);
  ConstMatMap wm(wv.data().data(), outd, in);
  Eigen::Map<const Eigen::RowVectorXd> bm(bv.data().data(), outd);
  MatMap om(out.data().data(), n, outd);
  om.noalias() = xm * wm.transpose();
  om.rowwise() += bm;

  const bool needs = tape.requires_grad(x) || tape.requires_grad(weight) || tape.requires_grad(bias);
  return tape.record(std::move(out), needs, [x, weight, bias, n, in, outd](Tape& t, const Tensor& up) {
    ConstMatMap g(up.data().data(), n, outd);
    if (t.requires_grad(x)) {
      ConstMatMap wm(t.value(weight).data().data(), outd, in);
      Tensor dx({static_cast<std::size_t>(n), static_cast<std::size_t>(in)});
      MatMap(dx.data().data(), n, in).noalias() = g * wm;
      t.accumulate(x, dx);
    }
    if (t.requires_grad(weight)) {
      ConstMatMap xm(t.value(x).data().data(), n, in);
      Tensor dw({static_cast<std::size_t>(outd), static_cast<std::size_t>(in)});
      MatMap(dw.data().data(), outd, in).noalias() = g.transpose() * xm;
      t.accumulate(weight, dw);
    }
    if (t.requires_grad(bias)) {
      Tensor db({static_cast<std::size_t>(outd)});
      Eigen::Map<Eigen::RowVectorXd>(db.data().data(), outd) = g.colwise().sum();
      t.accumulate(bias, db);
    }
  });
}

Var relu(Var x) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape& t, const Tensor& up) {
    const Tensor& xv = t.value(x);
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = xv[i] > 0.0 ? up[i] : 0.0;
    t.accumulate(x, dx);
  });
}

double logistic(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

Var sigmoid(Var x) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data()) v = logistic(v);
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape& t, const Tensor& up) {
    const Tensor& xv = t.value(x);
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double s = logistic(xv[i]);
      dx[i] = up[i] * s * (1.0 - s);
    }
    t.accumulate(x, dx);
  });
}

Var clamp(Var x, double lo, double hi) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data()) v = std::clamp(v, lo, hi);
  return tape.record(std::move(out), tape.requires_grad(x), [x, lo, hi](Tape& t, const Tensor& up) {
    const Tensor& xv = t.value(x);
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = (xv[i] >= lo && xv[i] <= hi) ? up[i] : 0.0;
    t.accumulate(x, dx);
  });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = *x.tape;
  Tensor out = x.value().reshaped(std::move(shape));
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape& t, const Tensor& up) {
    t.accumulate(x, up.reshaped(t.value(x).shape()));
  });
}

Var flatten(Var x) {
  const Shape& s = x.shape();
  require(!s.empty(), "flatten needs a batch dimension");
  const std::size_t n = s[0];
  return reshape(x, {n, n == 0 ? 0 : x.value().size() / n});
}

Var add(Var a, Var b) {
  Tape& tape = *a.tape;
  require(a.shape() == b.shape(),
          "add shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  out += b.value();
  const bool needs = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), needs, [a, b](Tape& t, const Tensor& up) {
    t.accumulate(a, up);
    t.accumulate(b, up);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = *a.tape;
  require(a.shape() == b.shape(),
          "mul shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const bool needs = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.record(std::move(out), needs, [a, b](Tape& t, const Tensor& up) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor da(av.shape());
      for (std::size_t i = 0; i < da.size(); ++i) da[i] = up[i] * bv[i];
      t.accumulate(a, da);
    }
    if (t.requires_grad(b)) {
      Tensor db(bv.shape());
      for (std::size_t i = 0; i < db.size(); ++i) db[i] = up[i] * av[i];
      t.accumulate(b, db);
    }
  });
}

Var scale(Var x, double factor) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return tape.record(std::move(out), tape.requires_grad(x), [x, factor](Tape& t, const Tensor& up) {
    Tensor dx = up;
    for (auto& v : dx.data()) v *= factor;
    t.accumulate(x, dx);
  });
}

Var sum(Var x) {
  Tape& tape = *x.tape;
  Tensor out({1}, x.value().sum());
  return tape.record(std::move(out), tape.requires_grad(x), [x](Tape& t, const Tensor& up) {
    t.accumulate(x, Tensor(t.value(x).shape(), up[0]));
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& tape = *logits.tape;
  const Tensor& z = logits.value();
  require(z.rank() == 2, "softmax_cross_entropy logits must be [N,K], got " + shape_string(z.shape()));
  const std::size_t n = z.dim(0), k = z.dim(1);
  require(labels.size() == n, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                  " labels for batch of " + std::to_string(n));
  auto probs = std::make_shared<Tensor>(z.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    const auto y = static_cast<std::size_t>(labels[i]);
    require(labels[i] >= 0 && y < k, "label " + std::to_string(labels[i]) + " out of range");
    for (std::size_t j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - mx) / denom;
    loss += -(row[y] - mx - std::log(denom));
  }
  loss /= static_cast<double>(n);
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record(Tensor({1}, loss), tape.requires_grad(logits),
                     [logits, probs, ys = std::move(ys), n, k](Tape& t, const Tensor& up) {
                       Tensor dz = *probs;
                       for (std::size_t i = 0; i < n; ++i) dz[i * k + static_cast<std::size_t>(ys[i])] -= 1.0;
                       const double s = up[0] / static_cast<double>(n);
                       for (auto& v : dz.data()) v *= s;
                       t.accumulate(logits, dz);
                     });
}

Var bernoulli_log_prob(Var probs, std::span<const std::uint8_t> action) {
  Tape& tape = *probs.tape;
  const Tensor& p = probs.value();
  require(p.size() == action.size(), "bernoulli_log_prob: action length " +
                                         std::to_string(action.size()) + " vs " +
                                         std::to_string(p.size()) + " probabilities");
  double lp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) lp += action[i] ? std::log(p[i]) : std::log1p(-p[i]);
  std::vector<std::uint8_t> a(action.begin(), action.end());
  return tape.record(Tensor({1}, lp), tape.requires_grad(probs),
                     [probs, a = std::move(a)](Tape& t, const Tensor& up) {
                       const Tensor& p = t.value(probs);
                       Tensor dp(p.shape());
                       for (std::size_t i = 0; i < dp.size(); ++i) {
                         dp[i] = up[0] * (a[i] ? 1.0 / p[i] : -1.0 / (1.0 - p[i]));
                       }
                       t.accumulate(probs, dp);
                     });
}

}  // namespace fprune
