// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>

#include "hpe/evaluation.hpp"
#include "hpe/geometry.hpp"

namespace hpe {

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Head rotation R = Ry(yaw) * Rx(pitch) * Rz(roll) (intrinsic y-x-z, angles
/// in degrees) in a camera frame with x right, y down and z into the scene:
///
///   Ry(a) = [ cos a  0  sin a ]   Rx(b) = [ 1    0       0    ]   Rz(c) = [ cos c  -sin c  0 ]
///           [   0    1    0   ]           [ 0  cos b  -sin b ]           [ sin c   cos c  0 ]
///           [-sin a  0  cos a ]           [ 0  sin b   cos b ]           [   0       0    1 ]
Mat3 rotation_matrix(const EulerPose& pose);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Orthographic projection of the rotated head axes, anchored at the box
/// centre with length half the box side (the longer side for non-square
/// boxes). side = R(1,0,0), down = R(0,1,0), front = R(0,0,-1).
struct AxisEndpoints {
  Point2 origin;
  Point2 side;
  Point2 down;
  Point2 front;
};
AxisEndpoints axis_endpoints(const BoundingBox& box, const EulerPose& pose);

/// Copy of `image` with the side axis in red, down in green and front in
/// blue. Lines outside the image are clipped.
Image draw_axes(const Image& image, const BoundingBox& box, const EulerPose& pose, double thickness = 2.0);

struct ScatterFiles {
  std::filesystem::path csv;
  std::filesystem::path png;
};

/// Writes `<stem>.csv` (truth value, absolute error) and a labelled scatter
/// plot `<stem>.png` for one angle (0 yaw, 1 pitch, 2 roll).
ScatterFiles scatter_export(const EvalReport& report, int angle, const std::filesystem::path& stem);

}  // namespace hpe
