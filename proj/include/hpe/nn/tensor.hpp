// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hpe/error.hpp"

namespace hpe::nn {

/// NCHW extent. Matrices are stored as (n, c, 1, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::size_t sample() const { return static_cast<std::size_t>(c) * plane(); }

  std::string str() const {
    return "[" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + "]";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major NCHW tensor owning its storage.
template <std::floating_point T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw InvalidInput("model-core", "tensor data does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  T* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.sample(); }
  const T* sample(int n) const { return data_.data() + static_cast<std::size_t>(n) * shape_.sample(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape s) {
    if (s.numel() != data_.size()) throw InvalidInput("model-core", "reshape changes element count");
    shape_ = s;
  }

  Tensor& operator+=(const Tensor& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Copies channels [c0, c0 + count) of every sample.
template <std::floating_point T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int count) {
  const Shape s = x.shape();
  Tensor<T> out({s.n, count, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.sample(n) + static_cast<std::size_t>(c0) * plane, count * plane, out.sample(n));
  }
  return out;
}

/// Adds `src` into channels [c0, c0 + src.c) of `dst`.
template <std::floating_point T>
void add_into_channels(Tensor<T>& dst, const Tensor<T>& src, int c0) {
  const Shape s = src.shape();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    T* d = dst.sample(n) + static_cast<std::size_t>(c0) * plane;
    const T* p = src.sample(n);
    for (std::size_t i = 0; i < s.sample(); ++i) d[i] += p[i];
  }
}

template <std::floating_point T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) total += p.shape().c;
  Tensor<T> out({s.n, total, s.h, s.w});
  int c0 = 0;
  for (const auto& p : parts) {
    add_into_channels(out, p, c0);
    c0 += p.shape().c;
  }
  return out;
}

}  // namespace hpe::nn
