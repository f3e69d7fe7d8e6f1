// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hpe/error.hpp"
#include "hpe/evaluation.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = HPE_FIXTURES;

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "hpe_test_evaluation";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Evaluate, FixtureReproducesHandComputedMaes) {
  const auto r = hpe::evaluate_predictions(hpe::load_predictions(kFixtures / "eval_predictions.csv"));
  EXPECT_EQ(r.count, 10u);
  EXPECT_EQ(r.per_angle_mae[0], 1.5);
  EXPECT_EQ(r.per_angle_mae[1], 2.0);
  EXPECT_EQ(r.per_angle_mae[2], 1.0);
  EXPECT_EQ(r.mae, 1.5);
  EXPECT_EQ(r.per_sample[7].abs_err[0], 4.0);
}

TEST(Evaluate, TableOneFixturesReprintExactly) {
  const auto biwi = hpe::evaluate_predictions(hpe::load_predictions(kFixtures / "table1_biwi.csv"));
  EXPECT_EQ(biwi.per_angle_mae[0], 3.68);
  EXPECT_EQ(biwi.per_angle_mae[1], 4.03);
  EXPECT_EQ(biwi.per_angle_mae[2], 2.57);
  const auto aflw = hpe::evaluate_predictions(hpe::load_predictions(kFixtures / "table1_aflw2000.csv"));
  EXPECT_EQ(aflw.per_angle_mae[0], 3.23);
  EXPECT_EQ(aflw.per_angle_mae[1], 5.54);
  EXPECT_EQ(aflw.per_angle_mae[2], 3.88);
  const auto table = hpe::format_table({{"BIWI", biwi}, {"AFLW-2000", aflw}});
  EXPECT_NE(table.find("3.680   4.030   2.570"), std::string::npos) << table;
  EXPECT_NE(table.find("3.230   5.540   3.880"), std::string::npos) << table;
  // The printed BIWI mean 3.43 is the rounded mean of the three angles.
  EXPECT_NEAR(biwi.mae, 3.43, 0.005);
}

TEST(Evaluate, PermutationDoesNotChangeTheReport) {
  auto preds = hpe::load_predictions(kFixtures / "eval_predictions.csv");
  const auto base = hpe::evaluate_predictions(preds);
  std::mt19937 rng(4);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(preds.begin(), preds.end(), rng);
    const auto r = hpe::evaluate_predictions(preds);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(r.per_angle_mae[a], base.per_angle_mae[a], 1e-12);
  }
}

TEST(Evaluate, NoWrapAround) {
  const auto r = hpe::evaluate_predictions({{"x", {89, 0, 0}, {-89, 0, 0}}});
  EXPECT_EQ(r.per_angle_mae[0], 178.0);
}

TEST(Evaluate, EmptyAndNonFiniteInputsAreRejected) {
  EXPECT_THROW(hpe::evaluate_predictions({}), hpe::InvalidInput);
  EXPECT_THROW(hpe::evaluate_predictions({{"x", {0, 0, 0}, {std::nan(""), 0, 0}}}), hpe::InvalidInput);
}

TEST(Evaluate, ModelOnEmptyRecordsIsRejected) {
  const hpe::PoseModel m(hpe::BackboneSpec{});
  EXPECT_THROW(hpe::evaluate(m, std::vector<hpe::Sample>{}), hpe::InvalidInput);
}

TEST(Evaluate, ModelReportCoversEverySample) {
  const hpe::PoseModel m(hpe::BackboneSpec{});
  const auto data = hpe::make_synthetic_dataset(5, 3);
  const auto r = hpe::evaluate(m, data, 2);
  EXPECT_EQ(r.count, 5u);
  EXPECT_EQ(r.per_sample[4].id, data[4].id);
}

TEST(Report, JsonRoundTripIsExact) {
  const auto r = hpe::evaluate_predictions(hpe::load_predictions(kFixtures / "eval_predictions.csv"));
  const auto path = temp_dir() / "report.json";
  hpe::write_report(path, r);
  const auto back = hpe::read_report(path);
  EXPECT_EQ(back.per_angle_mae, r.per_angle_mae);
  EXPECT_EQ(back.mae, r.mae);
  ASSERT_EQ(back.per_sample.size(), r.per_sample.size());
  EXPECT_EQ(back.per_sample[3].pred, r.per_sample[3].pred);
}

TEST(Report, MalformedJsonIsALoadError) {
  const auto path = temp_dir() / "bad.json";
  std::ofstream(path) << "{\"mae\": 1}";
  EXPECT_THROW(hpe::read_report(path), hpe::LoadError);
}

TEST(Predictions, MissingColumnIsNamed) {
  const auto path = temp_dir() / "nocol.csv";
  std::ofstream(path) << "id,yaw,pitch,roll,pred_yaw,pred_pitch\nx,0,0,0,0,0\n";
  try {
    hpe::load_predictions(path);
    FAIL() << "expected SchemaError";
  } catch (const hpe::SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("pred_roll"), std::string::npos);
  }
}

TEST(ReferenceTable, RendersPublishedValuesVerbatim) {
  const auto t = hpe::load_reference_table(kFixtures / "paper_reported.json");
  EXPECT_EQ(t.label, "paper-reported, not locally reproduced");
  const auto text = hpe::format_reference_table(t);
  EXPECT_NE(text.find("paper-reported, not locally reproduced"), std::string::npos);
  const auto find_row = [&](const std::string& table, const std::string& ds, const std::string& method) {
    for (const auto& r : t.rows) {
      if (r.table == table && r.dataset == ds && r.method == method) return r;
    }
    ADD_FAILURE() << "missing row " << method;
    return hpe::ReferenceRow{};
  };
  const auto biwi = find_row("1", "BIWI", "EHPNet");
  EXPECT_EQ(biwi.yaw, "3.68");
  EXPECT_EQ(biwi.pitch, "4.03");
  EXPECT_EQ(biwi.roll, "2.57");
  EXPECT_EQ(biwi.mae, "3.43");
  const auto aflw = find_row("1", "AFLW-2000", "EHPNet");
  EXPECT_EQ(aflw.yaw, "3.23");
  EXPECT_EQ(aflw.mae, "4.15");
  const auto kepler = find_row("1", "AFLW-2000", "KEPLER");
  EXPECT_EQ(kepler.yaw, "-");
  const auto ens = find_row("2", "BIWI", "Ensemble");
  EXPECT_EQ(ens.mae, "3.352");
  // Trailing zeros survive because values are kept as text.
  EXPECT_NE(text.find("3.680"), std::string::npos);
  EXPECT_NE(text.find("8.80"), std::string::npos);
  for (const auto& r : t.rows) {
    for (const auto* v : {&r.yaw, &r.pitch, &r.roll, &r.mae}) EXPECT_NE(text.find(*v), std::string::npos);
  }
}
