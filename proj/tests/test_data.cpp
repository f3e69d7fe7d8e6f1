// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "hpe/data.hpp"
#include "hpe/error.hpp"
#include "hpe/io.hpp"

namespace fs = std::filesystem;
using hpe::EulerPose;
using hpe::Image;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "hpe_test_data";
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const std::string& name, const std::string& text) {
  const auto p = temp_dir() / name;
  std::ofstream(p) << text;
  return p;
}

Image noise_image(int size, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(size, size, 3);
  for (auto& v : img.pixels()) v = u(rng);
  return img;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const hpe::Error& e) {
    return e.what();
  }
  return {};
}

/// Reads the pose back from a synthetic image without learning: bar
/// orientations from second moments of each channel, pitch from the green
/// bar's area (a capsule of radius r has area 2rL + pi r^2).
EulerPose decode_bars(const Image& img) {
  const double c = img.width() / 2.0;
  double angle[3];
  double mass[3];
  for (int ch = 0; ch < 3; ++ch) {
    double m = 0, sxx = 0, syy = 0, sxy = 0;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const double w = img.at(y, x, ch);
        const double px = x + 0.5 - c;
        const double py = y + 0.5 - c;
        m += w;
        sxx += w * px * px;
        syy += w * py * py;
        sxy += w * px * py;
      }
    }
    mass[ch] = m;
    angle[ch] = 0.5 * std::atan2(2 * sxy, sxx - syy) * 180.0 / std::numbers::pi;
  }
  // Red runs along (sin t, cos t): its principal angle is 90 - t.
  double red = angle[0] < 0 ? angle[0] + 180.0 : angle[0];
  const double r = 3.0;
  const double length = (mass[1] - std::numbers::pi * r * r) / (2 * r);
  return {2.0 * (90.0 - red), (length - 60.0) * 9.0 / 4.0, 2.0 * angle[2]};
}

}  // namespace

TEST(Annotations, CsvRowsResolveRelativeImagePaths) {
  const auto p = write_text("ok.csv",
                            "id,image,x1,y1,x2,y2,yaw,pitch,roll,split\n"
                            "a,img/a.png,1,2,31,42,10.5,-3,4,train\n"
                            "b,/abs/b.png,0,0,10,10,0,0,0,test\n");
  const auto set = hpe::load_annotations(p);
  ASSERT_EQ(set.records.size(), 2u);
  EXPECT_EQ(set.records[0].id, "a");
  EXPECT_EQ(set.records[0].image_path, temp_dir() / "img/a.png");
  EXPECT_EQ(set.records[0].box, (hpe::BoundingBox{1, 2, 31, 42}));
  EXPECT_EQ(set.records[0].pose, (EulerPose{10.5, -3, 4}));
  EXPECT_EQ(set.records[1].image_path, fs::path("/abs/b.png"));
  EXPECT_EQ(set.records[1].split, hpe::Split::test);
}

TEST(Annotations, JsonlMatchesCsv) {
  const auto p = write_text("ok.jsonl",
                            "{\"id\":\"a\",\"image\":\"img/a.png\",\"x1\":1,\"y1\":2,\"x2\":31,\"y2\":42,"
                            "\"yaw\":10.5,\"pitch\":-3,\"roll\":4,\"split\":\"train\"}\n");
  const auto set = hpe::load_annotations(p);
  ASSERT_EQ(set.records.size(), 1u);
  EXPECT_EQ(set.records[0].pose, (EulerPose{10.5, -3, 4}));
  EXPECT_EQ(set.records[0].box, (hpe::BoundingBox{1, 2, 31, 42}));
}

TEST(Annotations, NonFiniteAngleCitesTheLine) {
  const auto p = write_text("nan.csv",
                            "image,x1,y1,x2,y2,yaw,pitch,roll\n"
                            "a.png,0,0,10,10,1,2,3\n"
                            "b.png,0,0,10,10,nan,2,3\n"
                            "c.png,0,0,10,10,1,inf,3\n");
  const auto msg = error_text([&] { hpe::load_annotations(p); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
  EXPECT_EQ(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_THROW(hpe::load_annotations(p), hpe::SchemaError);
}

TEST(Annotations, MissingColumnIsNamed) {
  const auto p = write_text("nocol.csv", "image,x1,y1,x2,y2,yaw,roll\na.png,0,0,1,1,0,0\n");
  const auto msg = error_text([&] { hpe::load_annotations(p); });
  EXPECT_NE(msg.find("'pitch'"), std::string::npos) << msg;
  EXPECT_THROW(hpe::load_annotations(p), hpe::SchemaError);
}

TEST(Annotations, EmptyBoxIsRejected) {
  const auto p = write_text("box.csv", "image,x1,y1,x2,y2,yaw,pitch,roll\na.png,5,5,5,9,0,0,0\n");
  EXPECT_THROW(hpe::load_annotations(p), hpe::SchemaError);
}

TEST(Annotations, EmptyFileGivesNoRecordsAndAWarning) {
  const auto p = write_text("empty.csv", "");
  const auto set = hpe::load_annotations(p);
  EXPECT_TRUE(set.records.empty());
  EXPECT_EQ(set.warnings.size(), 1u);
}

TEST(Annotations, UnknownExtensionIsRejected) {
  EXPECT_THROW(hpe::annotation_format_for("labels.txt"), hpe::InvalidInput);
}

TEST(Annotations, PoseFilterDropsOutOfRangeRecords) {
  std::vector<hpe::SampleRecord> recs(3);
  recs[0].pose = {10, 20, 30};
  recs[1].pose = {10, 99, 30};
  recs[2].pose = {-93, 93, 0};
  const auto kept = hpe::filter_pose_range(recs);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[1].pose, recs[2].pose);
}

TEST(Preprocess, CropsTheSquaredBox) {
  const auto path = temp_dir() / "noise.png";
  hpe::io::write_image(path, noise_image(8, 1));
  const auto back = hpe::io::read_image(path);
  EXPECT_EQ(back.width(), 8);
  hpe::SampleRecord r{"r", path, {0, 0, 8, 4}, {1, 2, 3}, hpe::Split::train, {}};
  const auto s = hpe::preprocess(r, 16);
  EXPECT_EQ(s.image.width(), 16);
  EXPECT_EQ(s.pose, (EulerPose{1, 2, 3}));
  // Squaring pads two rows above the image, which read as zero.
  EXPECT_EQ(s.image.at(0, 8, 0), 0.0f);
}

TEST(Preprocess, UnreadableImageIsReported) {
  const std::vector<hpe::SampleRecord> recs{{"x", temp_dir() / "missing.png", {0, 0, 4, 4}, {}, {}, {}}};
  const auto problems = hpe::validate_images(recs);
  ASSERT_EQ(problems.size(), 1u);
  EXPECT_NE(problems[0].find("missing.png"), std::string::npos);
}

TEST(Augment, IdentityConfigReturnsTheInput) {
  const auto img = noise_image(32, 3);
  std::mt19937_64 rng(1);
  const auto a = hpe::augment(img, {5, 6, 7}, hpe::AugmentationConfig::identity(), rng);
  EXPECT_EQ(a.image, img);
  EXPECT_EQ(a.pose, (EulerPose{5, 6, 7}));
  EXPECT_FALSE(a.flipped);
}

TEST(Augment, ForcedFlipMirrorsImageAndLabel) {
  auto cfg = hpe::AugmentationConfig::identity();
  cfg.flip_prob = 1.0;
  const auto img = noise_image(32, 4);
  std::mt19937_64 rng(1);
  const auto a = hpe::augment(img, {5, 6, 7}, cfg, rng);
  EXPECT_TRUE(a.flipped);
  EXPECT_EQ(a.pose, (EulerPose{-5, 6, -7}));
  EXPECT_EQ(a.image, hpe::flip_image(img));
}

TEST(Augment, SameSeedSameOutput) {
  const auto img = noise_image(48, 5);
  const hpe::AugmentationConfig cfg;
  std::mt19937_64 r1(9);
  std::mt19937_64 r2(9);
  for (int i = 0; i < 5; ++i) {
    const auto a = hpe::augment(img, {1, 2, 3}, cfg, r1);
    const auto b = hpe::augment(img, {1, 2, 3}, cfg, r2);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.pose, b.pose);
  }
}

TEST(Augment, DrawCountDoesNotDependOnConfig) {
  const auto img = noise_image(16, 6);
  std::mt19937_64 r1(3);
  std::mt19937_64 r2(3);
  hpe::augment(img, {}, hpe::AugmentationConfig{}, r1);
  hpe::augment(img, {}, hpe::AugmentationConfig::identity(), r2);
  EXPECT_EQ(r1(), r2());
}

TEST(Augment, OutputStaysInUnitRange) {
  const auto img = noise_image(48, 7);
  hpe::AugmentationConfig cfg;
  cfg.brightness_delta = 0.9;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10; ++i) {
    const auto a = hpe::augment(img, {}, cfg, rng);
    for (float v : a.image.pixels()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Augment, InvalidConfigIsRejected) {
  hpe::AugmentationConfig cfg;
  cfg.flip_prob = 1.5;
  EXPECT_THROW(cfg.validate(), hpe::ConfigError);
  cfg = {};
  cfg.downscale_lo = 0.9;
  cfg.downscale_hi = 0.5;
  EXPECT_THROW(cfg.validate(), hpe::ConfigError);
}

TEST(Synthetic, SameSeedSameDataset) {
  const auto a = hpe::make_synthetic_dataset(5, 7);
  const auto b = hpe::make_synthetic_dataset(5, 7);
  const auto c = hpe::make_synthetic_dataset(5, 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].pose, b[i].pose);
    EXPECT_EQ(a[i].image, b[i].image);
  }
  EXPECT_NE(a[0].pose, c[0].pose);
}

TEST(Synthetic, MirroringMatchesTheFlippedLabel) {
  const EulerPose p{37.0, -21.0, 64.0};
  const auto img = hpe::render_synthetic(p);
  const auto mirrored = hpe::render_synthetic(hpe::flip_pose(p));
  double worst = 0;
  const auto flipped = hpe::flip_image(img);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    worst = std::max(worst, static_cast<double>(std::abs(flipped.pixels()[i] - mirrored.pixels()[i])));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Synthetic, BarDecoderRecoversThePose) {
  const auto data = hpe::make_synthetic_dataset(200, 21);
  double worst = 0;
  for (const auto& s : data) {
    const auto p = decode_bars(s.image);
    for (std::size_t a = 0; a < 3; ++a) worst = std::max(worst, std::abs(p[a] - s.pose[a]));
  }
  EXPECT_LT(worst, 0.5);
}

TEST(Holdout, SizesAndDisjointness) {
  const auto h = hpe::split_holdout(100, 0.02, 3);
  EXPECT_EQ(h.holdout.size(), 2u);
  EXPECT_EQ(h.train.size(), 98u);
  std::vector<std::size_t> all = h.train;
  all.insert(all.end(), h.holdout.begin(), h.holdout.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(hpe::split_holdout(10, 0.01, 3).holdout.size(), 1u);
  EXPECT_TRUE(hpe::split_holdout(10, 0.0, 3).holdout.empty());
  EXPECT_EQ(hpe::split_holdout(100, 0.02, 3).holdout, h.holdout);
}

namespace {

hpe::PseudoLabelStore sample_store() {
  hpe::PseudoLabelStore s;
  s.teacher_names = {"t1", "t2"};
  for (int i = 0; i < 3; ++i) {
    s.ids.push_back("id" + std::to_string(i));
    hpe::PseudoLabel<float> l;
    for (auto& row : l.rows) row.assign(62, 1.0f / 62.0f);
    l.rows[1].assign(62, 0.0f);
    l.rows[1][static_cast<std::size_t>(i)] = 1.0f;
    s.labels.push_back(l);
  }
  return s;
}

}  // namespace

TEST(PseudoLabels, RoundTripIsExact) {
  const auto path = temp_dir() / "labels.bin";
  const auto s = sample_store();
  hpe::write_pseudo_labels(path, s);
  const auto back = hpe::read_pseudo_labels(path);
  EXPECT_EQ(back.teacher_names, s.teacher_names);
  EXPECT_EQ(back.ids, s.ids);
  ASSERT_EQ(back.labels.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(back.labels[i].rows[a], s.labels[i].rows[a]);
  }
}

TEST(PseudoLabels, TruncatedPayloadIsALoadError) {
  const auto path = temp_dir() / "short.bin";
  hpe::write_pseudo_labels(path, sample_store());
  fs::resize_file(path, fs::file_size(path) - 4 * 62);
  EXPECT_THROW(hpe::read_pseudo_labels(path), hpe::LoadError);
}

TEST(PseudoLabels, BinCountMismatchIsALoadError) {
  const auto path = temp_dir() / "bins.bin";
  hpe::write_pseudo_labels(path, sample_store());
  EXPECT_THROW(hpe::read_pseudo_labels(path, hpe::BinGrid{66, -99, 99, 3}), hpe::LoadError);
}

TEST(PseudoLabels, UnnormalizedRowsAreRefused) {
  auto s = sample_store();
  s.labels[0].rows[0][0] = 0.5f;
  EXPECT_THROW(hpe::write_pseudo_labels(temp_dir() / "bad.bin", s), hpe::InvalidInput);
}
