// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpe/data.hpp"
#include "hpe/model.hpp"

namespace hpe {

struct SampleError {
  std::string id;
  EulerPose truth;
  EulerPose pred;
  std::array<double, 3> abs_err{};
};

/// Per-angle mean absolute error in degrees, without angular wrapping.
struct EvalReport {
  std::array<double, 3> per_angle_mae{};
  double mae = 0.0;
  std::size_t count = 0;
  std::vector<SampleError> per_sample;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

struct Prediction {
  std::string id;
  EulerPose truth;
  EulerPose pred;
};

/// Builds a report from (truth, prediction) pairs. Throws InvalidInput when
/// empty or when any angle is non-finite.
EvalReport evaluate_predictions(const std::vector<Prediction>& predictions);

EvalReport evaluate(const PoseModel& model, const std::vector<Sample>& samples, int batch_size = 64);
/// Preprocesses each record (square box, crop, resize) before evaluating.
EvalReport evaluate(const PoseModel& model, const std::vector<SampleRecord>& records, int batch_size = 64);

/// Reads a CSV with columns id, yaw, pitch, roll, pred_yaw, pred_pitch,
/// pred_roll.
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

/// Fixed-width text table with one row per report plus the mean column.
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

/// A row of published results, kept verbatim as strings so formatting never
/// alters the digits.
struct ReferenceRow {
  std::string table;
  std::string dataset;
  std::string method;
  std::string yaw;
  std::string pitch;
  std::string roll;
  std::string mae;
};

struct ReferenceTable {
  std::string label;
  std::vector<ReferenceRow> rows;
};

ReferenceTable load_reference_table(const std::filesystem::path& path);
std::string format_reference_table(const ReferenceTable& table);

}  // namespace hpe
