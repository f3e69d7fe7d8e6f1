// SPDX-License-Identifier: Apache-2.0
#include "hpe/render.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hpe/error.hpp"

namespace hpe {

namespace {

constexpr const char* kModule = "evaluation-reporting";

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    }
  }
  return r;
}

std::array<double, 3> apply(const Mat3& m, const std::array<double, 3>& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

/// Fills every pixel whose centre lies within thickness/2 of segment ab.
void draw_segment(Image& img, Point2 a, Point2 b, const std::array<float, 3>& colour, double thickness) {
  const double r = thickness / 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r)));
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - a.x;
      const double py = y + 0.5 - a.y;
      const double t = len2 > 0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
      if (std::hypot(px - t * dx, py - t * dy) <= r) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = colour[static_cast<std::size_t>(c)];
      }
    }
  }
}

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Mat3 rotation_matrix(const EulerPose& pose) {
  const double d = M_PI / 180.0;
  const double a = pose.yaw * d;
  const double b = pose.pitch * d;
  const double c = pose.roll * d;
  const Mat3 ry{{{std::cos(a), 0, std::sin(a)}, {0, 1, 0}, {-std::sin(a), 0, std::cos(a)}}};
  const Mat3 rx{{{1, 0, 0}, {0, std::cos(b), -std::sin(b)}, {0, std::sin(b), std::cos(b)}}};
  const Mat3 rz{{{std::cos(c), -std::sin(c), 0}, {std::sin(c), std::cos(c), 0}, {0, 0, 1}}};
  return mul(mul(ry, rx), rz);
}

AxisEndpoints axis_endpoints(const BoundingBox& box, const EulerPose& pose) {
  const Mat3 r = rotation_matrix(pose);
  const double len = 0.5 * std::max(box.width(), box.height());
  AxisEndpoints e;
  e.origin = {(box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0};
  auto project = [&](const std::array<double, 3>& axis) {
    const auto v = apply(r, axis);
    return Point2{e.origin.x + len * v[0], e.origin.y + len * v[1]};
  };
  e.side = project({1, 0, 0});
  e.down = project({0, 1, 0});
  e.front = project({0, 0, -1});
  return e;
}

Image draw_axes(const Image& image, const BoundingBox& box, const EulerPose& pose, double thickness) {
  if (image.channels() != 3) throw InvalidInput(kModule, "draw_axes needs a 3-channel image");
  Image out = image;
  const auto e = axis_endpoints(box, pose);
  draw_segment(out, e.origin, e.side, {1.0f, 0.0f, 0.0f}, thickness);
  draw_segment(out, e.origin, e.down, {0.0f, 1.0f, 0.0f}, thickness);
  draw_segment(out, e.origin, e.front, {0.0f, 0.0f, 1.0f}, thickness);
  return out;
}

ScatterFiles scatter_export(const EvalReport& report, int angle, const std::filesystem::path& stem) {
  if (angle < 0 || angle > 2) throw InvalidInput(kModule, "angle index must be 0, 1 or 2");
  if (report.per_sample.empty()) throw InvalidInput(kModule, "cannot plot an empty report");
  const std::string name = kAngleNames[angle];
  ScatterFiles files{stem, stem};
  files.csv += ".csv";
  files.png += ".png";
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());

  std::ofstream csv(files.csv);
  if (!csv) throw IoError(kModule, "cannot write '" + files.csv.string() + "'");
  csv << name << "_deg,abs_error_deg\n";
  double xmin = 0, xmax = 0, ymax = 0;
  bool first = true;
  for (const auto& s : report.per_sample) {
    const double x = s.truth[static_cast<std::size_t>(angle)];
    const double y = s.abs_err[static_cast<std::size_t>(angle)];
    csv << shortest(x) << ',' << shortest(y) << '\n';
    xmin = first ? x : std::min(xmin, x);
    xmax = first ? x : std::max(xmax, x);
    ymax = std::max(ymax, y);
    first = false;
  }
  if (!csv) throw IoError(kModule, "failed writing '" + files.csv.string() + "'");

  // Fixed axes: truth spans the codec range, error axis starts at zero.
  xmin = std::min(xmin, -93.0);
  xmax = std::max(xmax, 93.0);
  ymax = ymax > 0 ? ymax * 1.1 : 1.0;
  const int w = 640, h = 480, left = 70, right = 20, top = 30, bottom = 60;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar ink(0, 0, 0);
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (w - left - right))); };
  auto py = [&](double y) { return h - bottom - static_cast<int>(std::lround(y / ymax * (h - top - bottom))); };
  cv::line(img, {left, h - bottom}, {w - right, h - bottom}, ink, 1);
  cv::line(img, {left, h - bottom}, {left, top}, ink, 1);
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const double yv = ymax * k / 4.0;
    cv::line(img, {px(xv), h - bottom}, {px(xv), h - bottom + 5}, ink, 1);
    cv::putText(img, cv::format("%.0f", xv), {px(xv) - 14, h - bottom + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink);
    cv::line(img, {left - 5, py(yv)}, {left, py(yv)}, ink, 1);
    cv::putText(img, cv::format("%.1f", yv), {8, py(yv) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, ink);
  }
  cv::putText(img, name + " (degrees)", {w / 2 - 50, h - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, ink);
  cv::putText(img, "absolute error (degrees)", {left, top - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, ink);
  for (const auto& s : report.per_sample) {
    cv::circle(img, {px(s.truth[static_cast<std::size_t>(angle)]), py(s.abs_err[static_cast<std::size_t>(angle)])}, 2,
               cv::Scalar(180, 80, 30), cv::FILLED);
  }
  if (!cv::imwrite(files.png.string(), img)) throw IoError(kModule, "cannot write '" + files.png.string() + "'");
  return files;
}

}  // namespace hpe
