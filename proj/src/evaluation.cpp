// SPDX-License-Identifier: Apache-2.0
#include "hpe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hpe/error.hpp"

namespace hpe {

namespace {

constexpr const char* kModule = "evaluation-reporting";

nlohmann::json pose_json(const EulerPose& p) { return {p.yaw, p.pitch, p.roll}; }
EulerPose pose_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

std::vector<std::string> split_simple(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : per_sample) {
    samples.push_back({{"id", s.id}, {"truth", pose_json(s.truth)}, {"pred", pose_json(s.pred)}, {"abs_err", s.abs_err}});
  }
  return {{"per_angle_mae", {{"yaw", per_angle_mae[0]}, {"pitch", per_angle_mae[1]}, {"roll", per_angle_mae[2]}}},
          {"mae", mae},
          {"count", count},
          {"per_sample", samples}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    const auto& pa = j.at("per_angle_mae");
    r.per_angle_mae = {pa.at("yaw").get<double>(), pa.at("pitch").get<double>(), pa.at("roll").get<double>()};
    r.mae = j.at("mae").get<double>();
    r.count = j.at("count").get<std::size_t>();
    for (const auto& s : j.at("per_sample")) {
      r.per_sample.push_back({s.at("id").get<std::string>(), pose_from(s.at("truth")), pose_from(s.at("pred")),
                              s.at("abs_err").get<std::array<double, 3>>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(kModule, std::string("malformed report: ") + e.what());
  }
}

EvalReport evaluate_predictions(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw InvalidInput(kModule, "cannot evaluate an empty set of predictions");
  EvalReport r;
  r.count = predictions.size();
  std::array<double, 3> sum{};
  for (const auto& p : predictions) {
    if (!p.truth.finite() || !p.pred.finite()) throw InvalidInput(kModule, "non-finite angle for sample '" + p.id + "'");
    SampleError e{p.id, p.truth, p.pred, {}};
    for (std::size_t a = 0; a < 3; ++a) {
      e.abs_err[a] = std::abs(p.pred[a] - p.truth[a]);
      sum[a] += e.abs_err[a];
    }
    r.per_sample.push_back(std::move(e));
  }
  for (std::size_t a = 0; a < 3; ++a) r.per_angle_mae[a] = sum[a] / static_cast<double>(r.count);
  r.mae = (r.per_angle_mae[0] + r.per_angle_mae[1] + r.per_angle_mae[2]) / 3.0;
  return r;
}

EvalReport evaluate(const PoseModel& model, const std::vector<Sample>& samples, int batch_size) {
  if (samples.empty()) throw InvalidInput(kModule, "cannot evaluate an empty record list");
  std::vector<Prediction> preds;
  preds.reserve(samples.size());
  for (std::size_t b = 0; b < samples.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), b + static_cast<std::size_t>(batch_size));
    std::vector<Image> imgs;
    for (std::size_t i = b; i < end; ++i) imgs.push_back(samples[i].image);
    const auto poses = model.predict_poses(imgs);
    for (std::size_t i = b; i < end; ++i) preds.push_back({samples[i].id, samples[i].pose, poses[i - b]});
  }
  return evaluate_predictions(preds);
}

EvalReport evaluate(const PoseModel& model, const std::vector<SampleRecord>& records, int batch_size) {
  if (records.empty()) throw InvalidInput(kModule, "cannot evaluate an empty record list");
  std::vector<Sample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) samples.push_back(preprocess(r, model.input_size()));
  return evaluate(model, samples, batch_size);
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(kModule, "cannot open predictions file '" + path.string() + "'");
  const std::vector<std::string> required{"id", "yaw", "pitch", "roll", "pred_yaw", "pred_pitch", "pred_roll"};
  std::string line;
  std::vector<std::string> cols;
  std::vector<std::size_t> pos(required.size());
  std::vector<Prediction> out;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto cells = split_simple(line);
    if (cols.empty()) {
      cols = cells;
      for (std::size_t k = 0; k < required.size(); ++k) {
        auto it = std::find(cols.begin(), cols.end(), required[k]);
        if (it == cols.end()) throw SchemaError(kModule, "'" + path.string() + "' is missing column '" + required[k] + "'");
        pos[k] = static_cast<std::size_t>(it - cols.begin());
      }
      continue;
    }
    if (cells.size() != cols.size()) {
      throw SchemaError(kModule, "'" + path.string() + "' line " + std::to_string(n) + " has the wrong field count");
    }
    double v[6];
    for (int k = 0; k < 6; ++k) {
      const std::string& s = cells[pos[static_cast<std::size_t>(k) + 1]];
      char* end = nullptr;
      v[k] = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v[k])) {
        throw SchemaError(kModule, "'" + path.string() + "' line " + std::to_string(n) + ": '" +
                                       required[static_cast<std::size_t>(k) + 1] + "' is not a finite number");
      }
    }
    out.push_back({cells[pos[0]], {v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
  }
  return out;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(kModule, "cannot write report '" + path.string() + "'");
  // The serializer emits shortest round-trip digits, so reading back is exact.
  out << report.to_json().dump(2) << '\n';
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(kModule, "cannot open report '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(kModule, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return EvalReport::from_json(j);
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t w = 5;
  for (const auto& [name, _] : rows) w = std::max(w, name.size());
  std::ostringstream os;
  os << pad("Model", w, true) << " | " << pad("Yaw", 8) << pad("Pitch", 8) << pad("Roll", 8) << " | "
     << pad("MAE", 8) << " | " << pad("N", 6) << '\n';
  os << std::string(w + 45, '-') << '\n';
  for (const auto& [name, r] : rows) {
    os << pad(name, w, true) << " | " << pad(fixed(r.per_angle_mae[0], 3), 8) << pad(fixed(r.per_angle_mae[1], 3), 8)
       << pad(fixed(r.per_angle_mae[2], 3), 8) << " | " << pad(fixed(r.mae, 3), 8) << " | "
       << pad(std::to_string(r.count), 6) << '\n';
  }
  return os.str();
}

ReferenceTable load_reference_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(kModule, "cannot open reference table '" + path.string() + "'");
  try {
    nlohmann::json j;
    in >> j;
    ReferenceTable t;
    t.label = j.at("label").get<std::string>();
    for (const auto& r : j.at("rows")) {
      t.rows.push_back({r.at("table").get<std::string>(), r.at("dataset").get<std::string>(),
                        r.at("method").get<std::string>(), r.at("yaw").get<std::string>(),
                        r.at("pitch").get<std::string>(), r.at("roll").get<std::string>(),
                        r.at("mae").get<std::string>()});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(kModule, "'" + path.string() + "' is not a valid reference table: " + e.what());
  }
}

std::string format_reference_table(const ReferenceTable& table) {
  std::size_t w = 6;
  std::size_t d = 7;
  for (const auto& r : table.rows) {
    w = std::max(w, r.method.size());
    d = std::max(d, r.dataset.size());
  }
  std::ostringstream os;
  os << "# " << table.label << '\n';
  os << pad("Table", 7, true) << " | " << pad("Dataset", d, true) << " | " << pad("Method", w, true) << " | "
     << pad("Yaw", 7) << pad("Pitch", 7) << pad("Roll", 7) << " | " << pad("MAE", 7) << '\n';
  for (const auto& r : table.rows) {
    os << pad(r.table, 7, true) << " | " << pad(r.dataset, d, true) << " | " << pad(r.method, w, true) << " | "
       << pad(r.yaw, 7) << pad(r.pitch, 7) << pad(r.roll, 7) << " | " << pad(r.mae, 7) << '\n';
  }
  return os.str();
}

}  // namespace hpe
