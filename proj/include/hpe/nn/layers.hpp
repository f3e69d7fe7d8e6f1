// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hpe/nn/tensor.hpp"

namespace hpe::nn {

/// Called once per named tensor of a layer tree. `grad` is null for
/// non-trainable buffers such as batch-norm running statistics.
template <std::floating_point T>
using TensorVisitor = std::function<void(const std::string& name, Tensor<T>& value, Tensor<T>* grad)>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// A differentiable layer. `infer` is the stateless inference path and may be
/// called concurrently; `forward` is the training path and caches whatever
/// `backward` needs. `backward` accumulates parameter gradients and returns the
/// gradient with respect to the last `forward` input.
template <std::floating_point T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void visit(const std::string& /*prefix*/, const TensorVisitor<T>& /*v*/) {}
};

template <std::floating_point T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <std::floating_point T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <std::floating_point T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <std::floating_point T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <std::floating_point T>
void he_normal(Tensor<T>& w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : w.vec()) v = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------------------

template <std::floating_point T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad, bool bias, std::mt19937_64& rng)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad), has_bias_(bias),
        weight_({out, in, kernel, kernel}), weight_grad_(weight_.shape()) {
    he_normal(weight_, in * kernel * kernel, rng);
    if (has_bias_) {
      bias_ = Tensor<T>({1, out, 1, 1});
      bias_grad_ = Tensor<T>(bias_.shape());
    }
  }

  Shape out_shape(const Shape& s) const {
    return {s.n, out_, (s.h + 2 * pad_ - k_) / stride_ + 1, (s.w + 2 * pad_ - k_) / stride_ + 1};
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    check(x.shape());
    const Shape os = out_shape(x.shape());
    const int rows = in_ * k_ * k_;
    const int L = os.h * os.w;
    const int NL = os.n * L;
    RowMatrix<T> cols;
    const T* colptr = nullptr;
    if (pointwise()) {
      cols = gather_pointwise(x);
    } else {
      cols.resize(rows, NL);
      for (int n = 0; n < os.n; ++n) im2col(x, n, os, cols.data() + static_cast<std::size_t>(n) * L, NL);
    }
    colptr = cols.data();
    ConstMatMap<T> W(weight_.data(), out_, rows);
    ConstMatMap<T> C(colptr, rows, NL);
    RowMatrix<T> Y = W * C;
    Tensor<T> y(os);
    for (int n = 0; n < os.n; ++n) {
      for (int o = 0; o < out_; ++o) {
        const T b = has_bias_ ? bias_[static_cast<std::size_t>(o)] : T(0);
        const T* src = Y.data() + static_cast<std::size_t>(o) * NL + static_cast<std::size_t>(n) * L;
        T* dst = y.sample(n) + static_cast<std::size_t>(o) * L;
        for (int i = 0; i < L; ++i) dst[i] = src[i] + b;
      }
    }
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    return infer(x);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const Shape xs = input_.shape();
    const Shape os = dy.shape();
    const int rows = in_ * k_ * k_;
    const int L = os.h * os.w;
    const int NL = os.n * L;
    RowMatrix<T> G(out_, NL);
    for (int n = 0; n < os.n; ++n) {
      for (int o = 0; o < out_; ++o) {
        const T* src = dy.sample(n) + static_cast<std::size_t>(o) * L;
        std::copy_n(src, L, G.data() + static_cast<std::size_t>(o) * NL + static_cast<std::size_t>(n) * L);
      }
    }
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) bias_grad_[static_cast<std::size_t>(o)] += G.row(o).sum();
    }
    RowMatrix<T> cols;
    if (pointwise()) {
      cols = gather_pointwise(input_);
    } else {
      cols.resize(rows, NL);
      for (int n = 0; n < os.n; ++n) {
        im2col(input_, n, os, cols.data() + static_cast<std::size_t>(n) * L, NL);
      }
    }
    MatMap<T> dW(weight_grad_.data(), out_, rows);
    dW.noalias() += G * cols.transpose();

    ConstMatMap<T> W(weight_.data(), out_, rows);
    RowMatrix<T> dcols = W.transpose() * G;
    Tensor<T> dx(xs);
    if (pointwise()) {
      for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < in_; ++c) {
          const T* src = dcols.data() + static_cast<std::size_t>(c) * NL + static_cast<std::size_t>(n) * L;
          std::copy_n(src, L, dx.sample(n) + static_cast<std::size_t>(c) * L);
        }
      }
    } else {
      for (int n = 0; n < xs.n; ++n) {
        col2im(dcols.data() + static_cast<std::size_t>(n) * L, NL, os, n, dx);
      }
    }
    return dx;
  }

  void visit(const std::string& prefix, const TensorVisitor<T>& v) override {
    v(join_name(prefix, "weight"), weight_, &weight_grad_);
    if (has_bias_) v(join_name(prefix, "bias"), bias_, &bias_grad_);
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  void check(const Shape& s) const {
    if (s.c != in_) {
      throw InvalidInput("model-core", "conv expects " + std::to_string(in_) + " channels, got " + s.str());
    }
    if (s.h + 2 * pad_ < k_ || s.w + 2 * pad_ < k_) {
      throw InvalidInput("model-core", "conv input " + s.str() + " is smaller than the kernel");
    }
  }

  RowMatrix<T> gather_pointwise(const Tensor<T>& x) const {
    const Shape s = x.shape();
    const int L = s.h * s.w;
    RowMatrix<T> cols(in_, s.n * L);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < in_; ++c) {
        std::copy_n(x.sample(n) + static_cast<std::size_t>(c) * L, L,
                    cols.data() + static_cast<std::size_t>(c) * s.n * L + static_cast<std::size_t>(n) * L);
      }
    }
    return cols;
  }

  // Writes the receptive fields of sample n into a column block of width
  // Ho*Wo inside a row-major matrix with row stride `ld`.
  void im2col(const Tensor<T>& x, int n, const Shape& os, T* dst, int ld) const {
    const Shape s = x.shape();
    const T* src = x.sample(n);
    for (int c = 0; c < in_; ++c) {
      const T* plane = src + static_cast<std::size_t>(c) * s.plane();
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* row = dst + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * ld;
          for (int oy = 0; oy < os.h; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            T* out = row + static_cast<std::size_t>(oy) * os.w;
            if (iy < 0 || iy >= s.h) {
              std::fill_n(out, os.w, T(0));
              continue;
            }
            const T* line = plane + static_cast<std::size_t>(iy) * s.w;
            for (int ox = 0; ox < os.w; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              out[ox] = (ix >= 0 && ix < s.w) ? line[ix] : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const T* src, int ld, const Shape& os, int n, Tensor<T>& dx) const {
    const Shape s = dx.shape();
    T* dst = dx.sample(n);
    for (int c = 0; c < in_; ++c) {
      T* plane = dst + static_cast<std::size_t>(c) * s.plane();
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = src + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * ld;
          for (int oy = 0; oy < os.h; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= s.h) continue;
            T* line = plane + static_cast<std::size_t>(iy) * s.w;
            const T* in = row + static_cast<std::size_t>(oy) * os.w;
            for (int ox = 0; ox < os.w; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < s.w) line[ix] += in[ox];
            }
          }
        }
      }
    }
  }

  int in_, out_, k_, stride_, pad_;
  bool has_bias_;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps),
        gamma_({1, channels, 1, 1}, T(1)), beta_({1, channels, 1, 1}),
        gamma_grad_(gamma_.shape()), beta_grad_(beta_.shape()),
        running_mean_({1, channels, 1, 1}), running_var_({1, channels, 1, 1}, T(1)) {}

  Tensor<T> infer(const Tensor<T>& x) const override {
    const Shape s = x.shape();
    Tensor<T> y(s);
    const std::size_t plane = s.plane();
    for (int c = 0; c < c_; ++c) {
      const T inv = T(1) / std::sqrt(running_var_[c] + static_cast<T>(eps_));
      const T scale = gamma_[c] * inv;
      const T shift = beta_[c] - running_mean_[c] * scale;
      for (int n = 0; n < s.n; ++n) {
        const T* src = x.sample(n) + c * plane;
        T* dst = y.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
      }
    }
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    const double m = static_cast<double>(s.n) * static_cast<double>(plane);
    xhat_ = Tensor<T>(s);
    inv_std_.assign(static_cast<std::size_t>(c_), T(0));
    Tensor<T> y(s);
    for (int c = 0; c < c_; ++c) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* src = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      }
      const double mean = sum / m;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* src = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = src[i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / m;
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps_));
      inv_std_[static_cast<std::size_t>(c)] = inv;
      for (int n = 0; n < s.n; ++n) {
        const T* src = x.sample(n) + c * plane;
        T* xh = xhat_.sample(n) + c * plane;
        T* dst = y.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          xh[i] = (src[i] - static_cast<T>(mean)) * inv;
          dst[i] = xh[i] * gamma_[c] + beta_[c];
        }
      }
      const double unbiased = m > 1 ? sq / (m - 1) : var;
      running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    const Shape s = dy.shape();
    const std::size_t plane = s.plane();
    const T m = static_cast<T>(static_cast<double>(s.n) * static_cast<double>(plane));
    Tensor<T> dx(s);
    for (int c = 0; c < c_; ++c) {
      T sum_dy = 0;
      T sum_dy_xh = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* g = dy.sample(n) + c * plane;
        const T* xh = xhat_.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += g[i];
          sum_dy_xh += g[i] * xh[i];
        }
      }
      gamma_grad_[c] += sum_dy_xh;
      beta_grad_[c] += sum_dy;
      const T k = gamma_[c] * inv_std_[static_cast<std::size_t>(c)] / m;
      for (int n = 0; n < s.n; ++n) {
        const T* g = dy.sample(n) + c * plane;
        const T* xh = xhat_.sample(n) + c * plane;
        T* d = dx.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) d[i] = k * (m * g[i] - sum_dy - xh[i] * sum_dy_xh);
      }
    }
    return dx;
  }

  void visit(const std::string& prefix, const TensorVisitor<T>& v) override {
    v(join_name(prefix, "weight"), gamma_, &gamma_grad_);
    v(join_name(prefix, "bias"), beta_, &beta_grad_);
    v(join_name(prefix, "running_mean"), running_mean_, nullptr);
    v(join_name(prefix, "running_var"), running_var_, nullptr);
  }

 private:
  int c_;
  double momentum_, eps_;
  Tensor<T> gamma_, beta_, gamma_grad_, beta_grad_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> infer(const Tensor<T>& x) const override {
    Tensor<T> y = x;
    for (auto& v : y.vec()) v = v > T(0) ? v : T(0);
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    output_ = infer(x);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!(output_[i] > T(0))) dx[i] = T(0);
    }
    return dx;
  }

 private:
  Tensor<T> output_;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(int kernel, int stride, int pad) : k_(kernel), stride_(stride), pad_(pad) {}

  Tensor<T> infer(const Tensor<T>& x) const override {
    std::vector<std::size_t> unused;
    return run(x, unused, false);
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    return run(x, argmax_, true);
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
    return dx;
  }

 private:
  Tensor<T> run(const Tensor<T>& x, std::vector<std::size_t>& idx, bool record) const {
    const Shape s = x.shape();
    const Shape os{s.n, s.c, (s.h + 2 * pad_ - k_) / stride_ + 1, (s.w + 2 * pad_ - k_) / stride_ + 1};
    Tensor<T> y(os);
    if (record) idx.assign(os.numel(), 0);
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t arg = base;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= s.h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= s.w) continue;
                const std::size_t i = base + static_cast<std::size_t>(iy) * s.w + ix;
                if (x[i] > best) {
                  best = x[i];
                  arg = i;
                }
              }
            }
            y[o] = best;
            if (record) idx[o] = arg;
          }
        }
      }
    }
    return y;
  }

  int k_, stride_, pad_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Average pooling; padded cells count towards the divisor.
template <std::floating_point T>
class AvgPool2d final : public Layer<T> {
 public:
  AvgPool2d(int kernel, int stride, int pad = 0) : k_(kernel), stride_(stride), pad_(pad) {}

  Tensor<T> infer(const Tensor<T>& x) const override {
    const Shape s = x.shape();
    const Shape os = out_shape(s);
    Tensor<T> y(os);
    const T inv = T(1) / static_cast<T>(k_ * k_);
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox, ++o) {
            T acc = 0;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= s.h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix >= 0 && ix < s.w) acc += x[base + static_cast<std::size_t>(iy) * s.w + ix];
              }
            }
            y[o] = acc * inv;
          }
        }
      }
    }
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    return infer(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    const Shape s = in_shape_;
    const Shape os = dy.shape();
    Tensor<T> dx(s);
    const T inv = T(1) / static_cast<T>(k_ * k_);
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox, ++o) {
            const T g = dy[o] * inv;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= s.h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix >= 0 && ix < s.w) dx[base + static_cast<std::size_t>(iy) * s.w + ix] += g;
              }
            }
          }
        }
      }
    }
    return dx;
  }

 private:
  Shape out_shape(const Shape& s) const {
    return {s.n, s.c, (s.h + 2 * pad_ - k_) / stride_ + 1, (s.w + 2 * pad_ - k_) / stride_ + 1};
  }
  int k_, stride_, pad_;
  Shape in_shape_;
};

template <std::floating_point T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> infer(const Tensor<T>& x) const override {
    const Shape s = x.shape();
    Tensor<T> y({s.n, s.c, 1, 1});
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T* src = x.sample(n) + c * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
        y.at(n, c, 0, 0) = acc / static_cast<T>(plane);
      }
    }
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    return infer(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    const std::size_t plane = in_shape_.plane();
    for (int n = 0; n < in_shape_.n; ++n) {
      for (int c = 0; c < in_shape_.c; ++c) {
        const T g = dy.at(n, c, 0, 0) / static_cast<T>(plane);
        T* d = dx.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) d[i] = g;
      }
    }
    return dx;
  }

 private:
  Shape in_shape_;
};

/// Affine map over the flattened per-sample features.
template <std::floating_point T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out, std::mt19937_64& rng)
      : in_(in), out_(out), weight_({out, in, 1, 1}), bias_({1, out, 1, 1}),
        weight_grad_(weight_.shape()), bias_grad_(bias_.shape()) {
    he_normal(weight_, in, rng);
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    const int n = x.shape().n;
    if (static_cast<int>(x.shape().sample()) != in_) {
      throw InvalidInput("model-core", "linear layer expects " + std::to_string(in_) +
                                           " features, got " + x.shape().str());
    }
    ConstMatMap<T> X(x.data(), n, in_);
    ConstMatMap<T> W(weight_.data(), out_, in_);
    Tensor<T> y({n, out_, 1, 1});
    MatMap<T> Y(y.data(), n, out_);
    Y.noalias() = X * W.transpose();
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < out_; ++o) Y(i, o) += bias_[static_cast<std::size_t>(o)];
    }
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    return infer(x);
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    const int n = dy.shape().n;
    ConstMatMap<T> G(dy.data(), n, out_);
    ConstMatMap<T> X(input_.data(), n, in_);
    MatMap<T> dW(weight_grad_.data(), out_, in_);
    dW.noalias() += G.transpose() * X;
    for (int o = 0; o < out_; ++o) bias_grad_[static_cast<std::size_t>(o)] += G.col(o).sum();
    ConstMatMap<T> W(weight_.data(), out_, in_);
    Tensor<T> dx(input_.shape());
    MatMap<T> dX(dx.data(), n, in_);
    dX.noalias() = G * W;
    return dx;
  }
  void visit(const std::string& prefix, const TensorVisitor<T>& v) override {
    v(join_name(prefix, "weight"), weight_, &weight_grad_);
    v(join_name(prefix, "bias"), bias_, &bias_grad_);
  }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  int in_, out_;
  Tensor<T> weight_, bias_, weight_grad_, bias_grad_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <std::floating_point T>
class Sequential final : public Layer<T> {
 public:
  Sequential& add(std::string name, LayerPtr<T> layer) {
    layers_.emplace_back(std::move(name), std::move(layer));
    return *this;
  }
  template <typename L, typename... Args>
  Sequential& emplace(std::string name, Args&&... args) {
    return add(std::move(name), std::make_unique<L>(std::forward<Args>(args)...));
  }

  Tensor<T> infer(const Tensor<T>& x) const override {
    Tensor<T> h = x;
    for (const auto& [name, l] : layers_) h = l->infer(h);
    return h;
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = x;
    for (auto& [name, l] : layers_) h = l->forward(h);
    return h;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
    return g;
  }
  void visit(const std::string& prefix, const TensorVisitor<T>& v) override {
    for (auto& [name, l] : layers_) l->visit(join_name(prefix, name), v);
  }

  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::pair<std::string, LayerPtr<T>>> layers_;
};

/// Conv -> BN -> ReLU, the unit every backbone here is built from.
template <std::floating_point T>
LayerPtr<T> conv_bn_relu(int in, int out, int k, int stride, int pad, std::mt19937_64& rng,
                         bool relu = true) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->template emplace<Conv2d<T>>("conv", in, out, k, stride, pad, false, rng);
  seq->template emplace<BatchNorm2d<T>>("bn", out);
  if (relu) seq->template emplace<ReLU<T>>("relu");
  return seq;
}

}  // namespace hpe::nn
