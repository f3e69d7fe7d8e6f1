// SPDX-License-Identifier: Apache-2.0
#include "hpe/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "hpe/angle_codec.hpp"
#include "hpe/geometry.hpp"
#include "hpe/losses.hpp"
#include "hpe/nn/layers.hpp"

namespace hpe {

namespace {

/// Worst |a - b| / max(|b|, 1) over all coordinates.
double coordinate_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1.0));
  return worst;
}

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
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

PoseDistribution<double> random_distribution(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.5, 1.0);
  PoseDistribution<double> d;
  for (auto& row : d.rows) {
    row.resize(62);
    double s = 0;
    for (auto& v : row) s += v = g(rng) + 1e-9;
    for (auto& v : row) v /= s;
  }
  return d;
}

CheckResult codec_roundtrip() {
  const BinGrid grid;
  double worst = 0;
  for (int k = -930; k < 930; ++k) {
    const double a = k / 10.0;
    const auto d = AngleDistribution<double>::one_hot(grid, encode(a, grid).bin_index);
    worst = std::max(worst, std::abs(decode(d, grid) - a));
  }
  std::ostringstream os;
  os << "max |decode(encode(a)) - a| = " << worst;
  return {"codec roundtrip", worst <= 1.5 + 1e-12, os.str()};
}

CheckResult loss_gradients() {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> u(-95.0, 95.0);
  const BinGrid grid;
  double worst = 0;
  for (int seed = 0; seed < 10; ++seed) {
    std::vector<double> z(186);
    for (auto& v : z) v = n(rng);
    const EulerPose pose{u(rng), u(rng), u(rng)};
    const PseudoLabel<double> pseudo{random_distribution(rng).rows};

    std::vector<double> g(186);
    total_loss_flat<double>(z, pose, grid, {}, g);
    auto fd = central_difference([&](const std::vector<double>& x) { return total_loss_flat<double>(x, pose, grid).total; },
                                 z, 1e-5);
    worst = std::max(worst, coordinate_error(g, fd));

    distillation_loss_flat<double>(z, pseudo, {}, g);
    fd = central_difference([&](const std::vector<double>& x) { return distillation_loss_flat<double>(x, pseudo); }, z,
                            1e-5);
    worst = std::max(worst, coordinate_error(g, fd));
  }
  std::ostringstream os;
  os << "worst coordinate error " << worst;
  return {"loss gradient check", worst < 1e-4, os.str()};
}

CheckResult ensemble_oracle() {
  std::mt19937_64 rng(23);
  double worst_mean = 0;
  double worst_decode = 0;
  for (int n = 1; n <= 3; ++n) {
    std::vector<PoseDistribution<double>> teachers;
    for (int t = 0; t < n; ++t) teachers.push_back(random_distribution(rng));
    const auto e = ensemble<double>(teachers);
    for (std::size_t a = 0; a < 3; ++a) {
      double mean_decode = 0;
      for (std::size_t i = 0; i < 62; ++i) {
        double m = 0;
        for (const auto& t : teachers) m += t.rows[a][i];
        worst_mean = std::max(worst_mean, std::abs(e.rows[a][i] - m / n));
      }
      for (const auto& t : teachers) mean_decode += decode<double>(t.rows[a]) / n;
      worst_decode = std::max(worst_decode, std::abs(decode<double>(e.rows[a]) - mean_decode));
    }
  }
  std::ostringstream os;
  os << "max elementwise diff " << worst_mean << ", max decode diff " << worst_decode;
  return {"ensemble oracle", worst_mean <= 1e-12 && worst_decode <= 1e-9, os.str()};
}

CheckResult geometry_properties() {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> coord(-500, 500);
  std::uniform_int_distribution<int> extent(1, 400);
  for (int i = 0; i < 10000; ++i) {
    const int x1 = coord(rng);
    const int y1 = coord(rng);
    const BoundingBox b{x1, y1, x1 + extent(rng), y1 + extent(rng)};
    const BoundingBox s = square_box(b);
    if (s.width() != s.height() || !s.contains(b) || !(square_box(s) == s)) {
      return {"geometry properties", false, "square_box failed on a random box"};
    }
  }
  Image img(31, 17, 3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.pixels()) v = u(rng);
  const EulerPose pose{12.5, -40.0, 77.25};
  const auto once = flip_horizontal(img, pose);
  const auto twice = flip_horizontal(once.image, once.pose);
  const bool ok = twice.image == img && twice.pose == pose;
  return {"geometry properties", ok, ok ? "10000 boxes, flip involution exact" : "flip is not an involution"};
}

CheckResult layer_gradients() {
  std::mt19937_64 rng(31);
  nn::Sequential<double> net;
  net.add("block", nn::conv_bn_relu<double>(2, 3, 3, 2, 1, rng));
  net.emplace<nn::GlobalAvgPool<double>>("gap");
  nn::Tensor<double> x({3, 2, 6, 6});
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : x.vec()) v = n(rng);
  nn::Tensor<double> r({3, 3, 1, 1});
  for (auto& v : r.vec()) v = n(rng);
  net.forward(x);
  const auto dx = net.backward(r);
  auto f = [&](const std::vector<double>& xv) {
    const auto y = net.forward(nn::Tensor<double>(x.shape(), xv));
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  const double err = coordinate_error(dx.vec(), central_difference(f, x.vec(), 1e-5));
  std::ostringstream os;
  os << "conv-bn-relu input gradient error " << err;
  return {"layer gradient check", err < 1e-6, os.str()};
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  std::vector<CheckResult> out;
  for (const auto& check : {codec_roundtrip, loss_gradients, ensemble_oracle, geometry_properties, layer_gradients}) {
    try {
      out.push_back(check());
    } catch (const std::exception& e) {
      out.push_back({"unexpected exception", false, e.what()});
    }
  }
  return out;
}

}  // namespace hpe
