// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hpe/error.hpp"

namespace hpe {

/// Axis-aligned face box in pixel coordinates (x right, y down). The box
/// covers columns [x1, x2) and rows [y1, y2); after squaring it may extend
/// past the image, in which case the missing pixels read as zero.
struct BoundingBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  bool valid() const { return x2 > x1 && y2 > y1; }
  bool contains(const BoundingBox& o) const {
    return x1 <= o.x1 && y1 <= o.y1 && x2 >= o.x2 && y2 >= o.y2;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Head orientation in degrees.
struct EulerPose {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  double operator[](std::size_t i) const { return i == 0 ? yaw : (i == 1 ? pitch : roll); }
  double& operator[](std::size_t i) { return i == 0 ? yaw : (i == 1 ? pitch : roll); }
  bool finite() const { return std::isfinite(yaw) && std::isfinite(pitch) && std::isfinite(roll); }
  friend bool operator==(const EulerPose&, const EulerPose&) = default;
};

inline constexpr const char* kAngleNames[3] = {"yaw", "pitch", "roll"};

/// Interleaved (HWC) float image. Pixel values are kept in whatever range the
/// producer used; files decode to [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 3, float fill = 0.0f)
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 0 || height < 0 || channels <= 0) {
      throw InvalidInput("geometry", "image dimensions must be non-negative");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> pixels() { return data_; }
  std::span<const float> pixels() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 3;
  std::vector<float> data_;
};

/// Pads the shorter side so the box becomes exactly square. The shorter axis
/// grows by floor(k/2) on the low side and k - floor(k/2) on the high side,
/// with k = |w - h|; the longer axis is untouched.
inline BoundingBox square_box(const BoundingBox& box) {
  if (!box.valid()) {
    throw InvalidInput("geometry", "degenerate bounding box (" + std::to_string(box.x1) + ", " +
                                       std::to_string(box.y1) + ", " + std::to_string(box.x2) +
                                       ", " + std::to_string(box.y2) + ")");
  }
  const int w = box.width();
  const int h = box.height();
  const int k = std::abs(w - h);
  const int low = k / 2;
  const int high = k - low;
  BoundingBox out = box;
  if (w > h) {
    out.y1 -= low;
    out.y2 += high;
  } else if (h > w) {
    out.x1 -= low;
    out.x2 += high;
  }
  return out;
}

namespace detail {

// Bilinear sample of the rectangle [x0, x0+sw) x [y0, y0+sh) of `src`, with
// neighbour indices clamped to that rectangle and pixels outside `src` read
// as zero. Pixel centres sit at integer + 0.5 (half-pixel convention), so a
// same-size resample is an exact copy.
inline void resample_region(const Image& src, int x0, int y0, int sw, int sh, Image& dst) {
  const int ow = dst.width();
  const int oh = dst.height();
  const int ch = src.channels();
  const double sx_scale = static_cast<double>(sw) / ow;
  const double sy_scale = static_cast<double>(sh) / oh;

  auto fetch = [&](int y, int x, int c) -> float {
    if (x < 0 || y < 0 || x >= src.width() || y >= src.height()) return 0.0f;
    return src.at(y, x, c);
  };

  for (int oy = 0; oy < oh; ++oy) {
    double fy = (oy + 0.5) * sy_scale - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
    const int ry0 = static_cast<int>(std::floor(fy));
    const int ry1 = std::min(ry0 + 1, sh - 1);
    const float wy = static_cast<float>(fy - ry0);
    for (int ox = 0; ox < ow; ++ox) {
      double fx = (ox + 0.5) * sx_scale - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
      const int rx0 = static_cast<int>(std::floor(fx));
      const int rx1 = std::min(rx0 + 1, sw - 1);
      const float wx = static_cast<float>(fx - rx0);
      for (int c = 0; c < ch; ++c) {
        const float p00 = fetch(y0 + ry0, x0 + rx0, c);
        const float p01 = fetch(y0 + ry0, x0 + rx1, c);
        const float p10 = fetch(y0 + ry1, x0 + rx0, c);
        const float p11 = fetch(y0 + ry1, x0 + rx1, c);
        float top = p00;
        if (wx != 0.0f) top += wx * (p01 - p00);
        float bottom = p10;
        if (wx != 0.0f) bottom += wx * (p11 - p10);
        dst.at(oy, ox, c) = wy != 0.0f ? top + wy * (bottom - top) : top;
      }
    }
  }
}

}  // namespace detail

/// Bilinear resize of the whole image.
inline Image resize_bilinear(const Image& src, int width, int height) {
  if (width <= 0 || height <= 0 || src.empty()) {
    throw InvalidInput("geometry", "resize target must be positive and source non-empty");
  }
  if (width == src.width() && height == src.height()) return src;
  Image out(width, height, src.channels());
  detail::resample_region(src, 0, 0, src.width(), src.height(), out);
  return out;
}

struct CropResult {
  Image image;
  /// Set when the box does not overlap the image at all; `image` is then all zero.
  bool empty_intersection = false;
};

/// Extracts `box` from `image` (zero outside the image) and resamples it to
/// size x size with bilinear interpolation.
inline CropResult crop_and_resize(const Image& image, const BoundingBox& box, int size = 112) {
  if (size <= 0) throw InvalidInput("geometry", "crop size must be positive");
  if (!box.valid()) throw InvalidInput("geometry", "degenerate crop box");
  CropResult result{Image(size, size, image.channels()), false};
  const bool overlaps =
      box.x1 < image.width() && box.y1 < image.height() && box.x2 > 0 && box.y2 > 0;
  if (!overlaps) {
    result.empty_intersection = true;
    return result;
  }
  detail::resample_region(image, box.x1, box.y1, box.width(), box.height(), result.image);
  return result;
}

/// Mirrors the image about its vertical axis and relabels the pose to
/// (-yaw, pitch, -roll).
inline Image flip_image(const Image& image) {
  Image out(image.width(), image.height(), image.channels());
  const int w = image.width();
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < image.channels(); ++c) out.at(y, w - 1 - x, c) = image.at(y, x, c);
    }
  }
  return out;
}

inline EulerPose flip_pose(const EulerPose& pose) { return {-pose.yaw, pose.pitch, -pose.roll}; }

struct FlipResult {
  Image image;
  EulerPose pose;
};

inline FlipResult flip_horizontal(const Image& image, const EulerPose& pose) {
  return {flip_image(image), flip_pose(pose)};
}

}  // namespace hpe
