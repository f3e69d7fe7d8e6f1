// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "hpe/error.hpp"

namespace hpe {

/// Uniform binning of the pose range. Bin i covers [lo + i*width, lo + (i+1)*width)
/// and is represented by its centre.
struct BinGrid {
  int num_bins = 62;
  double lo = -93.0;
  double hi = 93.0;
  double width = 3.0;

  static BinGrid standard() { return {}; }

  double center(int i) const { return lo + width * i + width / 2.0; }

  std::vector<double> centers() const {
    std::vector<double> c(static_cast<std::size_t>(num_bins));
    for (int i = 0; i < num_bins; ++i) c[static_cast<std::size_t>(i)] = center(i);
    return c;
  }

  /// Throws unless (hi - lo) == num_bins * width.
  void validate() const {
    if (num_bins <= 0 || !(width > 0.0) || std::abs((hi - lo) - num_bins * width) > 1e-9) {
      throw InvalidInput("angle-codec", "inconsistent bin grid: num_bins=" + std::to_string(num_bins) +
                                            " lo=" + std::to_string(lo) + " hi=" + std::to_string(hi) +
                                            " width=" + std::to_string(width));
    }
  }

  friend bool operator==(const BinGrid&, const BinGrid&) = default;
};

struct BinOneHot {
  int bin_index = 0;
  friend bool operator==(const BinOneHot&, const BinOneHot&) = default;
};

/// Probability vector over the bins of one angle.
template <std::floating_point T>
struct AngleDistribution {
  std::vector<T> probs;

  static AngleDistribution one_hot(const BinGrid& grid, int bin) {
    AngleDistribution d{std::vector<T>(static_cast<std::size_t>(grid.num_bins), T(0))};
    d.probs.at(static_cast<std::size_t>(bin)) = T(1);
    return d;
  }
  static AngleDistribution uniform(const BinGrid& grid) {
    return {std::vector<T>(static_cast<std::size_t>(grid.num_bins), T(1) / T(grid.num_bins))};
  }

  /// True when entries are non-negative and sum to one within `tol`.
  bool normalized(double tol = 1e-6) const {
    double sum = 0.0;
    for (T p : probs) {
      if (!(p >= T(0))) return false;
      sum += static_cast<double>(p);
    }
    return std::abs(sum - 1.0) <= tol;
  }
};

/// Hard class of an angle; values outside [lo, hi) clamp to the boundary bins.
inline BinOneHot encode(double angle, const BinGrid& grid = BinGrid::standard()) {
  if (!std::isfinite(angle)) {
    throw InvalidInput("angle-codec", "cannot encode non-finite angle " + std::to_string(angle));
  }
  const double raw = std::floor((angle - grid.lo) / grid.width);
  const double clamped = std::clamp(raw, 0.0, static_cast<double>(grid.num_bins - 1));
  return {static_cast<int>(clamped)};
}

/// Expectation of the bin centres under `probs`.
template <std::floating_point T>
T decode(std::span<const T> probs, const BinGrid& grid = BinGrid::standard()) {
  if (probs.size() != static_cast<std::size_t>(grid.num_bins)) {
    throw InvalidInput("angle-codec", "distribution has " + std::to_string(probs.size()) +
                                          " entries, grid expects " + std::to_string(grid.num_bins));
  }
  T sum = 0;
  T expectation = 0;
  for (int i = 0; i < grid.num_bins; ++i) {
    const T p = probs[static_cast<std::size_t>(i)];
    sum += p;
    expectation += p * static_cast<T>(grid.center(i));
  }
  if (!(std::abs(static_cast<double>(sum) - 1.0) <= 1e-3)) {
    throw InvalidInput("angle-codec", "distribution is not normalized (sum=" +
                                          std::to_string(static_cast<double>(sum)) + ")");
  }
  return expectation;
}

template <std::floating_point T>
T decode(const AngleDistribution<T>& dist, const BinGrid& grid = BinGrid::standard()) {
  return decode<T>(std::span<const T>(dist.probs), grid);
}

/// Softmax with max subtraction, written into `out` (may alias `logits`).
template <std::floating_point T>
void softmax_into(std::span<const T> logits, std::span<T> out, T temperature = T(1)) {
  if (logits.empty()) return;
  const T inv_t = T(1) / temperature;
  T max_v = logits[0];
  for (T z : logits) max_v = std::max(max_v, z);
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - max_v) * inv_t);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

template <std::floating_point T>
AngleDistribution<T> softmax(std::span<const T> logits, T temperature = T(1)) {
  for (T z : logits) {
    if (!std::isfinite(z)) throw InvalidInput("angle-codec", "softmax input is not finite");
  }
  AngleDistribution<T> d{std::vector<T>(logits.size())};
  softmax_into<T>(logits, d.probs, temperature);
  return d;
}

template <std::floating_point T>
AngleDistribution<T> softmax(const std::vector<T>& logits, T temperature = T(1)) {
  return softmax<T>(std::span<const T>(logits), temperature);
}

/// log(softmax(z / temperature)) without forming the probabilities first.
template <std::floating_point T>
void log_softmax_into(std::span<const T> logits, std::span<T> out, T temperature = T(1)) {
  if (logits.empty()) return;
  const T inv_t = T(1) / temperature;
  std::size_t arg = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[arg]) arg = i;
  }
  const T max_v = logits[arg];
  // The maximum contributes exactly 1; log1p keeps precision when the rest
  // is tiny (confident rows).
  T rest = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i != arg) rest += std::exp((logits[i] - max_v) * inv_t);
  }
  const T log_sum = std::log1p(rest);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - max_v) * inv_t - log_sum;
}

}  // namespace hpe
