// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hpe/nn/layers.hpp"

namespace hpe::nn {

template <std::floating_point T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;  // null for buffers
};

template <std::floating_point T>
std::vector<ParamRef<T>> collect(Layer<T>& layer, const std::string& prefix = {}) {
  std::vector<ParamRef<T>> refs;
  layer.visit(prefix, [&](const std::string& name, Tensor<T>& value, Tensor<T>* grad) {
    refs.push_back({name, &value, grad});
  });
  return refs;
}

template <std::floating_point T>
void zero_grad(std::span<const ParamRef<T>> params) {
  for (const auto& p : params) {
    if (p.grad) p.grad->fill(T(0));
  }
}

/// Adam with bias correction; moments are keyed by parameter name so the
/// state can be checkpointed and restored.
template <std::floating_point T>
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam() = default;
  explicit Adam(Options opts) : opts_(opts) {}

  void step(std::span<const ParamRef<T>> params, double lr) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(steps_));
    const T b1 = static_cast<T>(opts_.beta1);
    const T b2 = static_cast<T>(opts_.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(opts_.eps);
    const T wd = static_cast<T>(opts_.weight_decay);
    for (const auto& p : params) {
      if (!p.grad) continue;
      auto& m = first_[p.name];
      auto& v = second_[p.name];
      if (m.size() != p.value->size()) {
        m.assign(p.value->size(), T(0));
        v.assign(p.value->size(), T(0));
      }
      T* w = p.value->data();
      const T* g = p.grad->data();
      for (std::size_t i = 0; i < m.size(); ++i) {
        const T gi = g[i] + wd * w[i];
        m[i] = b1 * m[i] + (T(1) - b1) * gi;
        v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
        w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      }
    }
  }

  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  std::map<std::string, std::vector<T>>& first_moments() { return first_; }
  std::map<std::string, std::vector<T>>& second_moments() { return second_; }

 private:
  Options opts_;
  long steps_ = 0;
  std::map<std::string, std::vector<T>> first_;
  std::map<std::string, std::vector<T>> second_;
};

/// Cosine annealing from `base` at epoch 0 to `floor` at epoch == total.
inline double cosine_lr(double base, double floor, int epoch, int total) {
  if (total <= 0) return base;
  const double progress = static_cast<double>(epoch) / static_cast<double>(total);
  return floor + (base - floor) * (1.0 + std::cos(M_PI * progress)) / 2.0;
}

}  // namespace hpe::nn
