// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hpe/error.hpp"
#include "hpe/io.hpp"
#include "hpe/model.hpp"

namespace fs = std::filesystem;
using hpe::BackboneSpec;
using hpe::EulerPose;
using hpe::Image;
using hpe::PoseModel;

namespace {

constexpr std::array<char, 8> kMagic{'H', 'P', 'E', 'C', 'K', 'P', 'T', '1'};

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "hpe_test_model";
  fs::create_directories(dir);
  return dir / name;
}

Image noise_image(int size, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(size, size, 3);
  for (auto& v : img.pixels()) v = u(rng);
  return img;
}

PoseModel tiny(std::uint64_t seed = 0) {
  hpe::ModelOptions opts;
  opts.seed = seed;
  return PoseModel(BackboneSpec{}, opts);
}

/// Zero head weights and a bias of 30 at one bin per angle.
void set_peaked_heads(PoseModel& m, std::array<int, 3> bins) {
  for (int a = 0; a < 3; ++a) {
    auto& head = m.head(a);
    head.weight().fill(0.0f);
    head.bias().fill(0.0f);
    head.bias()[static_cast<std::size_t>(bins[static_cast<std::size_t>(a)])] = 30.0f;
  }
}

}  // namespace

TEST(PoseModel, LogitShapeIsThreeRowsOfBins) {
  const auto m = tiny();
  const std::vector<Image> imgs{noise_image(112, 1), noise_image(112, 2)};
  const auto logits = m.infer(m.make_batch(imgs));
  EXPECT_EQ(logits.shape().n, 2);
  EXPECT_EQ(logits.shape().c, 3 * 62);
  const auto rows = m.forward(imgs);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows[0].rows) EXPECT_EQ(r.size(), 62u);
}

TEST(PoseModel, WrongImageSizeIsRejected) {
  const auto m = tiny();
  EXPECT_THROW(m.predict_pose(noise_image(64, 1)), hpe::InvalidInput);
}

TEST(PoseModel, PredictionsDoNotDependOnBatchComposition) {
  const auto m = tiny(3);
  const std::vector<Image> imgs{noise_image(112, 4), noise_image(112, 5), noise_image(112, 6)};
  const auto together = m.predict_poses(imgs);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto alone = m.predict_pose(imgs[i]);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(alone[a], together[i][a], 1e-5);
  }
}

TEST(PoseModel, ZeroHeadsDecodeToZero) {
  auto m = tiny();
  for (int a = 0; a < 3; ++a) {
    m.head(a).weight().fill(0.0f);
    m.head(a).bias().fill(0.0f);
  }
  const auto p = m.predict_pose(noise_image(112, 9));
  EXPECT_NEAR(p.yaw, 0.0, 1e-4);
  EXPECT_NEAR(p.pitch, 0.0, 1e-4);
  EXPECT_NEAR(p.roll, 0.0, 1e-4);
}

TEST(PoseModel, PeakedHeadsDecodeToFrozenBinCentres) {
  auto m = tiny();
  set_peaked_heads(m, {31, 0, 61});
  const auto p = m.predict_pose(noise_image(112, 10));
  // Oracle: 50-digit softmax expectation with logit 30 at the bin.
  EXPECT_NEAR(p.yaw, 1.4999999999912974, 1e-4);
  EXPECT_NEAR(p.pitch, -91.499999999469142, 1e-4);
  EXPECT_NEAR(p.roll, 91.499999999469142, 1e-4);
}

TEST(PoseModel, SameSeedSameWeights) {
  EXPECT_EQ(tiny(5).checksum(), tiny(5).checksum());
  EXPECT_NE(tiny(5).checksum(), tiny(6).checksum());
}

TEST(PoseModel, CloneIsIndependent) {
  auto a = tiny(1);
  auto b = a.clone();
  EXPECT_EQ(a.checksum(), b.checksum());
  b.head(0).bias()[0] += 1.0f;
  EXPECT_NE(a.checksum(), b.checksum());
  b.copy_state_from(a);
  EXPECT_EQ(a.checksum(), b.checksum());
}

TEST(PoseModel, UnknownBackboneIsRejected) {
  EXPECT_THROW(PoseModel(BackboneSpec{"vgg16", 0, {}}), hpe::ValidationError);
}

TEST(PoseModel, ParameterCountsFollowDepth) {
  // Reduced widths keep construction cheap; the ordering is what matters.
  auto count = [](const std::string& name) {
    BackboneSpec s{name, 0, {{"width", 8}}};
    return PoseModel(s).parameter_count();
  };
  const auto r18 = count("resnet18");
  const auto r101 = count("resnet101");
  EXPECT_LT(count("tiny-cnn"), r18);
  EXPECT_LT(r18, r101);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  auto m = tiny(11);
  const auto path = temp_path("roundtrip.ckpt");
  hpe::save_checkpoint(m, path);
  const auto loaded = hpe::load_checkpoint(path);
  EXPECT_EQ(loaded.checksum(), m.checksum());
  EXPECT_EQ(loaded.spec(), m.spec());
  const auto img = noise_image(112, 12);
  const auto a = m.predict_pose(img);
  const auto b = loaded.predict_pose(img);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(hpe::load_training_state(path).has_value());
}

TEST(Checkpoint, TrainingStateRoundTrips) {
  auto m = tiny(2);
  hpe::TrainingState st;
  st.epochs_completed = 3;
  st.optimizer_steps = 42;
  st.first_moments["x"] = {1.0f, 2.0f};
  st.second_moments["x"] = {3.0f, 4.0f};
  st.extra = {{"note", "kept"}};
  const auto path = temp_path("state.ckpt");
  hpe::save_checkpoint(m, path, &st);
  const auto back = hpe::load_training_state(path);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->epochs_completed, 3);
  EXPECT_EQ(back->optimizer_steps, 42);
  EXPECT_EQ(back->first_moments.at("x"), st.first_moments.at("x"));
  EXPECT_EQ(back->second_moments.at("x"), st.second_moments.at("x"));
  EXPECT_EQ(back->extra.at("note"), "kept");
}

TEST(Checkpoint, MismatchedBackboneIsALoadError) {
  const auto path = temp_path("tiny.ckpt");
  hpe::save_checkpoint(tiny(), path);
  EXPECT_THROW(hpe::load_checkpoint(path, {std::string("resnet18"), std::nullopt}), hpe::LoadError);
}

TEST(Checkpoint, MismatchedGridIsALoadError) {
  const auto path = temp_path("grid.ckpt");
  hpe::save_checkpoint(tiny(), path);
  hpe::BinGrid other{66, -99.0, 99.0, 3.0};
  EXPECT_THROW(hpe::load_checkpoint(path, {std::nullopt, other}), hpe::LoadError);
}

TEST(Checkpoint, MissingGridFieldIsNamed) {
  const auto path = temp_path("nogrid.ckpt");
  hpe::save_checkpoint(tiny(), path);
  auto c = hpe::io::read_container(path, kMagic, "test");
  c.header.erase("grid");
  hpe::io::write_container(path, kMagic, c.header, c.payload);
  try {
    hpe::load_checkpoint(path);
    FAIL() << "expected LoadError";
  } catch (const hpe::LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("grid"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, TruncatedFileIsALoadError) {
  const auto path = temp_path("trunc.ckpt");
  hpe::save_checkpoint(tiny(), path);
  fs::resize_file(path, fs::file_size(path) - 100);
  EXPECT_THROW(hpe::load_checkpoint(path), hpe::LoadError);
  fs::resize_file(path, 12);
  EXPECT_THROW(hpe::load_checkpoint(path), hpe::LoadError);
}

TEST(Checkpoint, WrongMagicIsALoadError) {
  const auto path = temp_path("magic.ckpt");
  std::ofstream(path) << "NOTACKPTxxxxxxxxxxxxxxxx";
  EXPECT_THROW(hpe::load_checkpoint(path), hpe::LoadError);
}

TEST(Checkpoint, MissingFileIsAnError) {
  EXPECT_THROW(hpe::load_checkpoint(temp_path("absent.ckpt")), hpe::Error);
}
