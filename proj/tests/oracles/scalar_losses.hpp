// SPDX-License-Identifier: Apache-2.0
//
// Straight-line reference formulas for the training objectives, written
// without any of the library's helpers (no log-softmax, no shared decode) and
// evaluated in long double. Used as the independent side of value checks.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline long double bin_center(int i) { return -93.0L + 3.0L * i + 1.5L; }

inline int bin_of(double angle) {
  long double b = std::floor((static_cast<long double>(angle) + 93.0L) / 3.0L);
  if (b < 0) b = 0;
  if (b > 61) b = 61;
  return static_cast<int>(b);
}

inline std::vector<long double> probs(const double* z, int n) {
  long double m = z[0];
  for (int i = 1; i < n; ++i) m = std::max<long double>(m, z[i]);
  std::vector<long double> e(static_cast<std::size_t>(n));
  long double s = 0;
  for (int i = 0; i < n; ++i) {
    e[static_cast<std::size_t>(i)] = std::exp(static_cast<long double>(z[i]) - m);
    s += e[static_cast<std::size_t>(i)];
  }
  for (auto& v : e) v /= s;
  return e;
}

/// Sum over three angles of -log q[target] + w * (E[centre] - clamp(y))^2.
inline long double total_loss(const std::vector<double>& logits, const std::array<double, 3>& pose,
                              double reg_weight = 1.0) {
  long double total = 0;
  for (int a = 0; a < 3; ++a) {
    auto q = probs(logits.data() + 62 * a, 62);
    const int t = bin_of(pose[static_cast<std::size_t>(a)]);
    long double r = 0;
    for (int i = 0; i < 62; ++i) r += q[static_cast<std::size_t>(i)] * bin_center(i);
    const long double y = std::clamp(static_cast<long double>(pose[static_cast<std::size_t>(a)]), -93.0L, 93.0L);
    total += -std::log(std::max(q[static_cast<std::size_t>(t)], 1e-12L)) + reg_weight * (r - y) * (r - y);
  }
  return total;
}

/// Sum over three angles of sum_i p_i log(p_i / q_i).
inline long double distillation_loss(const std::vector<double>& logits, const std::vector<double>& pseudo) {
  long double total = 0;
  for (int a = 0; a < 3; ++a) {
    auto q = probs(logits.data() + 62 * a, 62);
    for (int i = 0; i < 62; ++i) {
      const long double p = std::max<long double>(pseudo[static_cast<std::size_t>(62 * a + i)], 1e-12L);
      total += p * std::log(p / q[static_cast<std::size_t>(i)]);
    }
  }
  return total;
}

/// Central differences of f at x with step h.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|b|_inf, tiny): relative error of a whole gradient.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0;
  double den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-300);
}

/// Worst per-coordinate error |a_i - b_i| / max(|b_i|, 1): relative for
/// large components, absolute for components below one.
inline double coordinate_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1.0));
  }
  return worst;
}

}  // namespace oracle
