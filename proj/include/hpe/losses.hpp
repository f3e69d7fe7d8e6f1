// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hpe/angle_codec.hpp"
#include "hpe/error.hpp"
#include "hpe/geometry.hpp"

namespace hpe {

/// Floor applied to probabilities before taking logs.
inline constexpr double kProbEpsilon = 1e-12;

/// Counts how often a loss had to clamp a probability to kProbEpsilon.
struct LossDiagnostics {
  long clamped = 0;
};

/// Raw network output for one sample: one row of bin logits per angle
/// (yaw, pitch, roll).
template <std::floating_point T>
struct PoseLogits {
  std::array<std::vector<T>, 3> rows;

  static PoseLogits zeros(const BinGrid& grid) {
    PoseLogits l;
    for (auto& r : l.rows) r.assign(static_cast<std::size_t>(grid.num_bins), T(0));
    return l;
  }
};

/// Per-angle probability rows, e.g. a student's softmax output.
template <std::floating_point T>
struct PoseDistribution {
  std::array<std::vector<T>, 3> rows;
};

/// Teacher-ensemble soft target for one sample.
template <std::floating_point T>
struct PseudoLabel {
  std::array<std::vector<T>, 3> rows;
};

template <std::floating_point T>
constexpr double normalization_tolerance() {
  return std::max(1e-6, 64.0 * static_cast<double>(std::numeric_limits<T>::epsilon()));
}

template <std::floating_point T>
PoseDistribution<T> softmax_rows(const PoseLogits<T>& logits, T temperature = T(1)) {
  PoseDistribution<T> d;
  for (std::size_t a = 0; a < 3; ++a) d.rows[a] = softmax<T>(logits.rows[a], temperature).probs;
  return d;
}

// ---------------------------------------------------------------------------
// Hard-label objective
// ---------------------------------------------------------------------------

/// Cross-entropy of a single angle distribution against its target bin.
template <std::floating_point T>
T classification_loss(const AngleDistribution<T>& dist, BinOneHot target,
                      LossDiagnostics* diag = nullptr) {
  if (target.bin_index < 0 || static_cast<std::size_t>(target.bin_index) >= dist.probs.size()) {
    throw InvalidInput("losses", "target bin " + std::to_string(target.bin_index) + " out of range");
  }
  T p = dist.probs[static_cast<std::size_t>(target.bin_index)];
  if (p < static_cast<T>(kProbEpsilon)) {
    p = static_cast<T>(kProbEpsilon);
    if (diag) ++diag->clamped;
  }
  return -std::log(p);
}

template <std::floating_point T>
T classification_loss_batch(std::span<const AngleDistribution<T>> dists,
                            std::span<const BinOneHot> targets, LossDiagnostics* diag = nullptr) {
  if (dists.size() != targets.size() || dists.empty()) {
    throw InvalidInput("losses", "classification batch needs equal, non-zero sample counts");
  }
  T sum = 0;
  for (std::size_t i = 0; i < dists.size(); ++i) sum += classification_loss(dists[i], targets[i], diag);
  return sum / static_cast<T>(dists.size());
}

template <std::floating_point T>
T regression_loss(T predicted, T truth) {
  const T d = predicted - truth;
  return d * d;
}

template <std::floating_point T>
T regression_loss_batch(std::span<const T> predicted, std::span<const T> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw InvalidInput("losses", "regression batch needs equal, non-zero sample counts");
  }
  T sum = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += regression_loss(predicted[i], truth[i]);
  return sum / static_cast<T>(predicted.size());
}

struct HardLossOptions {
  double reg_weight = 1.0;
};

template <std::floating_point T>
struct HardLossResult {
  T total = 0;
  std::array<T, 3> cls{};
  std::array<T, 3> reg{};
  /// Decoded (expected) angle per row.
  std::array<T, 3> predicted{};
};

/// Classification + weighted regression loss for one sample, summed over the
/// three angles. The regression target is clamped to the grid range. When
/// `grad` is non-empty it receives d(total)/d(logits), row-major 3 x num_bins.
template <std::floating_point T>
HardLossResult<T> total_loss_flat(std::span<const T> logits, const EulerPose& target,
                                  const BinGrid& grid, const HardLossOptions& opts = {},
                                  std::span<T> grad = {}, LossDiagnostics* diag = nullptr) {
  const std::size_t nb = static_cast<std::size_t>(grid.num_bins);
  if (logits.size() != 3 * nb) {
    throw InvalidInput("losses", "expected " + std::to_string(3 * nb) + " logits, got " +
                                     std::to_string(logits.size()));
  }
  if (!grad.empty() && grad.size() != logits.size()) {
    throw InvalidInput("losses", "gradient buffer has the wrong size");
  }
  const T w = static_cast<T>(opts.reg_weight);
  const T log_floor = static_cast<T>(std::log(kProbEpsilon));
  std::vector<T> log_q(nb);
  std::vector<T> q(nb);
  HardLossResult<T> out;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto row = logits.subspan(a * nb, nb);
    for (T z : row) {
      if (!std::isfinite(z)) throw InvalidInput("losses", "non-finite logit");
    }
    log_softmax_into<T>(row, log_q);
    for (std::size_t i = 0; i < nb; ++i) q[i] = std::exp(log_q[i]);

    const int t = encode(target[a], grid).bin_index;
    T lq = log_q[static_cast<std::size_t>(t)];
    bool clamped = false;
    if (lq < log_floor) {
      lq = log_floor;
      clamped = true;
      if (diag) ++diag->clamped;
    }
    T r = 0;
    for (std::size_t i = 0; i < nb; ++i) r += q[i] * static_cast<T>(grid.center(static_cast<int>(i)));
    const T y = static_cast<T>(std::clamp(target[a], grid.lo, grid.hi));
    const T diff = r - y;

    out.cls[a] = -lq;
    out.reg[a] = diff * diff;
    out.predicted[a] = r;
    out.total += out.cls[a] + w * out.reg[a];

    if (!grad.empty()) {
      // d(-log q_t)/dz_j = q_j - [j == t];  d r/dz_j = q_j (c_j - r)
      auto g = grad.subspan(a * nb, nb);
      for (std::size_t i = 0; i < nb; ++i) {
        const T c = static_cast<T>(grid.center(static_cast<int>(i)));
        T gi = clamped ? T(0) : q[i];
        if (!clamped && static_cast<int>(i) == t) gi -= T(1);
        gi += T(2) * w * diff * q[i] * (c - r);
        g[i] = gi;
      }
    }
  }
  return out;
}

template <std::floating_point T>
HardLossResult<T> total_loss(const PoseLogits<T>& logits, const EulerPose& target,
                             const BinGrid& grid = BinGrid::standard(), const HardLossOptions& opts = {},
                             LossDiagnostics* diag = nullptr) {
  std::vector<T> flat;
  for (const auto& r : logits.rows) flat.insert(flat.end(), r.begin(), r.end());
  return total_loss_flat<T>(flat, target, grid, opts, {}, diag);
}

template <std::floating_point T>
struct BatchLossResult {
  T total = 0;
  std::array<T, 3> cls{};
  std::array<T, 3> reg{};
};

/// Mean of total_loss over a batch of flat logits (N x 3 x num_bins). The
/// gradient, if requested, is that of the mean.
template <std::floating_point T>
BatchLossResult<T> total_loss_batch(std::span<const T> logits, std::span<const EulerPose> targets,
                                    const BinGrid& grid, const HardLossOptions& opts = {},
                                    std::span<T> grad = {}, LossDiagnostics* diag = nullptr) {
  const std::size_t per = 3 * static_cast<std::size_t>(grid.num_bins);
  const std::size_t n = targets.size();
  if (n == 0 || logits.size() != n * per) {
    throw InvalidInput("losses", "batch logits do not match the number of targets");
  }
  BatchLossResult<T> out;
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::span<T> g = grad.empty() ? std::span<T>{} : grad.subspan(s * per, per);
    const auto r = total_loss_flat<T>(logits.subspan(s * per, per), targets[s], grid, opts, g, diag);
    out.total += r.total * inv_n;
    for (std::size_t a = 0; a < 3; ++a) {
      out.cls[a] += r.cls[a] * inv_n;
      out.reg[a] += r.reg[a] * inv_n;
    }
    for (T& v : g) v *= inv_n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensembling and distillation
// ---------------------------------------------------------------------------

/// Uniform mean of the teachers' per-angle distributions.
template <std::floating_point T>
PseudoLabel<T> ensemble(std::span<const PoseDistribution<T>> teachers) {
  if (teachers.empty()) throw InvalidInput("losses", "ensemble needs at least one teacher");
  const double tol = normalization_tolerance<T>();
  PseudoLabel<T> out;
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t nb = teachers.front().rows[a].size();
    out.rows[a].assign(nb, T(0));
    for (std::size_t t = 0; t < teachers.size(); ++t) {
      const auto& row = teachers[t].rows[a];
      if (row.size() != nb) throw InvalidInput("losses", "teachers disagree on the number of bins");
      if (!AngleDistribution<T>{row}.normalized(tol)) {
        throw InvalidInput("losses", "teacher " + std::to_string(t) + " " + kAngleNames[a] +
                                         " row is not a normalized distribution");
      }
      for (std::size_t i = 0; i < nb; ++i) out.rows[a][i] += row[i];
    }
    const T inv = T(1) / static_cast<T>(teachers.size());
    for (auto& v : out.rows[a]) v *= inv;
  }
  return out;
}

template <std::floating_point T>
PseudoLabel<T> ensemble(const std::vector<PoseDistribution<T>>& teachers) {
  return ensemble<T>(std::span<const PoseDistribution<T>>(teachers));
}

/// KL(pseudo || student) summed over the three angles.
template <std::floating_point T>
T distillation_loss(const PoseDistribution<T>& student, const PseudoLabel<T>& pseudo,
                    LossDiagnostics* diag = nullptr) {
  const T eps = static_cast<T>(kProbEpsilon);
  T total = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto& q = student.rows[a];
    const auto& p = pseudo.rows[a];
    if (q.size() != p.size()) throw InvalidInput("losses", "student and pseudo label bin counts differ");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T pi = std::max(p[i], eps);
      T qi = q[i];
      if (qi < eps) {
        qi = eps;
        if (diag && p[i] > T(0)) ++diag->clamped;
      }
      total += pi * std::log(pi / qi);
    }
  }
  return total;
}

struct DistillOptions {
  double temperature = 1.0;
};

/// KL(pseudo || softmax(logits / T)) for one sample given flat logits
/// (3 x num_bins). Fills `grad` with d(loss)/d(logits) when non-empty.
template <std::floating_point T>
T distillation_loss_flat(std::span<const T> logits, const PseudoLabel<T>& pseudo,
                         const DistillOptions& opts = {}, std::span<T> grad = {}) {
  const std::size_t nb = pseudo.rows[0].size();
  if (logits.size() != 3 * nb) throw InvalidInput("losses", "distillation logits have the wrong size");
  if (!grad.empty() && grad.size() != logits.size()) {
    throw InvalidInput("losses", "gradient buffer has the wrong size");
  }
  const T temp = static_cast<T>(opts.temperature);
  const T eps = static_cast<T>(kProbEpsilon);
  std::vector<T> log_q(nb);
  T total = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto row = logits.subspan(a * nb, nb);
    for (T z : row) {
      if (!std::isfinite(z)) throw InvalidInput("losses", "non-finite logit");
    }
    const auto& p = pseudo.rows[a];
    if (p.size() != nb) throw InvalidInput("losses", "pseudo label rows differ in length");
    log_softmax_into<T>(row, log_q, temp);
    T p_sum = 0;
    for (std::size_t i = 0; i < nb; ++i) {
      const T pi = std::max(p[i], eps);
      total += pi * (std::log(pi) - log_q[i]);
      p_sum += pi;
    }
    if (!grad.empty()) {
      auto g = grad.subspan(a * nb, nb);
      for (std::size_t i = 0; i < nb; ++i) {
        g[i] = (std::exp(log_q[i]) * p_sum - std::max(p[i], eps)) / temp;
      }
    }
  }
  return total;
}

/// Mean distillation loss over a batch (gradient of the mean).
template <std::floating_point T>
T distillation_loss_batch(std::span<const T> logits, std::span<const PseudoLabel<T>> pseudo,
                          const DistillOptions& opts = {}, std::span<T> grad = {}) {
  const std::size_t n = pseudo.size();
  if (n == 0 || logits.size() % n != 0) {
    throw InvalidInput("losses", "batch logits do not match the number of pseudo labels");
  }
  const std::size_t per = logits.size() / n;
  const T inv_n = T(1) / static_cast<T>(n);
  T total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    std::span<T> g = grad.empty() ? std::span<T>{} : grad.subspan(s * per, per);
    total += distillation_loss_flat<T>(logits.subspan(s * per, per), pseudo[s], opts, g) * inv_n;
    for (T& v : g) v *= inv_n;
  }
  return total;
}

/// Pseudo label of a horizontally flipped view: with a grid symmetric about
/// zero, negating yaw and roll reverses their rows.
template <std::floating_point T>
PseudoLabel<T> flip_pseudo_label(PseudoLabel<T> label) {
  std::reverse(label.rows[0].begin(), label.rows[0].end());
  std::reverse(label.rows[2].begin(), label.rows[2].end());
  return label;
}

}  // namespace hpe
