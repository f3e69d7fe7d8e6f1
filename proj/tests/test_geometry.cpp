// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "hpe/geometry.hpp"

using hpe::BoundingBox;
using hpe::EulerPose;
using hpe::Image;

namespace {

Image random_image(int w, int h, std::mt19937& rng) {
  Image img(w, h, 3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.pixels()) v = u(rng);
  return img;
}

}  // namespace

TEST(SquareBox, PadsShorterVerticalAxisEvenly) {
  EXPECT_EQ(hpe::square_box({10, 20, 110, 60}), (BoundingBox{10, -10, 110, 90}));
}

TEST(SquareBox, AlreadySquareIsIdentity) {
  EXPECT_EQ(hpe::square_box({5, 5, 55, 55}), (BoundingBox{5, 5, 55, 55}));
}

TEST(SquareBox, OddPaddingPutsTheExtraPixelOnTheHighSide) {
  // k = 3: one row above, two below.
  EXPECT_EQ(hpe::square_box({0, 0, 5, 2}), (BoundingBox{0, -1, 5, 4}));
  // Same rule on the horizontal axis.
  EXPECT_EQ(hpe::square_box({0, 0, 2, 5}), (BoundingBox{-1, 0, 4, 5}));
}

TEST(SquareBox, DegenerateBoxIsRejected) {
  EXPECT_THROW(hpe::square_box({3, 3, 3, 10}), hpe::InvalidInput);
  EXPECT_THROW(hpe::square_box({0, 5, 10, 5}), hpe::InvalidInput);
  EXPECT_THROW(hpe::square_box({10, 0, 0, 10}), hpe::InvalidInput);
}

TEST(SquareBox, PropertiesOverRandomBoxes) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> coord(-500, 500);
  std::uniform_int_distribution<int> extent(1, 400);
  for (int i = 0; i < 2000; ++i) {
    const int x1 = coord(rng);
    const int y1 = coord(rng);
    const BoundingBox b{x1, y1, x1 + extent(rng), y1 + extent(rng)};
    const BoundingBox s = hpe::square_box(b);
    ASSERT_EQ(s.width(), s.height());
    ASSERT_EQ(s.width(), std::max(b.width(), b.height()));
    ASSERT_TRUE(s.contains(b));
    ASSERT_EQ(hpe::square_box(s), s);
    if (b.width() >= b.height()) {
      ASSERT_EQ(s.x1, b.x1);
      ASSERT_EQ(s.x2, b.x2);
    } else {
      ASSERT_EQ(s.y1, b.y1);
      ASSERT_EQ(s.y2, b.y2);
    }
  }
}

TEST(CropAndResize, SameSizeCropIsExactCopy) {
  std::mt19937 rng(3);
  const Image img = random_image(40, 30, rng);
  const auto r = hpe::crop_and_resize(img, {5, 4, 21, 20}, 16);
  EXPECT_FALSE(r.empty_intersection);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) ASSERT_EQ(r.image.at(y, x, c), img.at(y + 4, x + 5, c));
    }
  }
}

TEST(CropAndResize, ConstantImageStaysConstant) {
  const Image img(300, 300, 3, 0.37f);
  const auto down = hpe::crop_and_resize(img, {10, 10, 234, 234}, 112);
  for (float v : down.image.pixels()) ASSERT_EQ(v, 0.37f);
  const auto up = hpe::crop_and_resize(img, {100, 100, 130, 130}, 112);
  for (float v : up.image.pixels()) ASSERT_EQ(v, 0.37f);
}

TEST(CropAndResize, HalfOutsideBoxIsHalfZero) {
  const Image white(100, 100, 3, 1.0f);
  // Left half of the box hangs off the image.
  const auto r = hpe::crop_and_resize(white, {-40, 10, 40, 90}, 40);
  ASSERT_FALSE(r.empty_intersection);
  // Expected array built by direct indexing: a 2:1 downsample whose source
  // columns 0..39 are zero and 40..79 are one.
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 40; ++x) {
      const float expected = x < 20 ? 0.0f : 1.0f;
      for (int c = 0; c < 3; ++c) ASSERT_EQ(r.image.at(y, x, c), expected) << "x=" << x;
    }
  }
}

TEST(CropAndResize, HalfOutsideUpsampledBoundaryNearCentre) {
  const Image white(64, 64, 3, 1.0f);
  const auto r = hpe::crop_and_resize(white, {-16, 0, 16, 32}, 112);
  // Find the first column whose value exceeds one half; it must be within a
  // pixel of the centre column.
  int boundary = -1;
  for (int x = 0; x < 112; ++x) {
    if (r.image.at(50, x, 0) > 0.5f) {
      boundary = x;
      break;
    }
  }
  EXPECT_NEAR(boundary, 56, 1);
  EXPECT_EQ(r.image.at(50, 0, 1), 0.0f);
  EXPECT_EQ(r.image.at(50, 111, 1), 1.0f);
}

TEST(CropAndResize, DisjointBoxGivesZeroImageAndFlag) {
  const Image img(50, 50, 3, 1.0f);
  const auto r = hpe::crop_and_resize(img, {60, 60, 100, 100}, 20);
  EXPECT_TRUE(r.empty_intersection);
  for (float v : r.image.pixels()) ASSERT_EQ(v, 0.0f);
}

TEST(Flip, RelabelsYawAndRoll) {
  const Image img(4, 4, 3);
  EXPECT_EQ(hpe::flip_horizontal(img, {30, 10, -5}).pose, (EulerPose{-30, 10, 5}));
  EXPECT_EQ(hpe::flip_horizontal(img, {0, 20, 0}).pose, (EulerPose{0, 20, 0}));
}

TEST(Flip, MirrorsColumns) {
  Image img(3, 1, 3);
  img.at(0, 0, 0) = 1.0f;
  const auto f = hpe::flip_horizontal(img, {});
  EXPECT_EQ(f.image.at(0, 2, 0), 1.0f);
  EXPECT_EQ(f.image.at(0, 0, 0), 0.0f);
}

TEST(Flip, IsAnInvolution) {
  std::mt19937 rng(5);
  for (int i = 0; i < 20; ++i) {
    const Image img = random_image(17 + i, 9 + i, rng);
    const EulerPose pose{rng() % 181 - 90.0, rng() % 181 - 90.0, rng() % 181 - 90.0};
    const auto once = hpe::flip_horizontal(img, pose);
    const auto twice = hpe::flip_horizontal(once.image, once.pose);
    ASSERT_TRUE(twice.image == img);
    ASSERT_EQ(twice.pose, pose);
  }
}

TEST(Resize, RoundTripOfSameSizeIsIdentity) {
  std::mt19937 rng(9);
  const Image img = random_image(12, 12, rng);
  EXPECT_TRUE(hpe::resize_bilinear(img, 12, 12) == img);
  EXPECT_THROW(hpe::resize_bilinear(img, 0, 5), hpe::InvalidInput);
}
