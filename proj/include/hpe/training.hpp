// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpe/data.hpp"
#include "hpe/model.hpp"

namespace hpe {

enum class TrainMode { hard, distill };
enum class PseudoMode { on_the_fly, precomputed };

/// Every knob of a training run. Keys accepted by `set` (and by config files
/// and `--set`) are listed in README.md.
struct TrainConfig {
  TrainMode mode = TrainMode::hard;
  /// 0 selects the mode default: 100 for hard-label training, 200 for
  /// distillation.
  int epochs = 0;
  double lr = 1e-4;
  double lr_floor = 0.0;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double reg_weight = 1.0;
  double weight_decay = 0.0;
  double temperature = 1.0;
  /// Weight of an auxiliary hard-label term during distillation.
  double hard_weight = 0.0;
  std::vector<std::filesystem::path> teacher_checkpoints;
  PseudoMode pseudo_mode = PseudoMode::on_the_fly;
  std::filesystem::path pseudo_labels;
  double val_fraction = 0.02;
  bool pose_filter = false;
  AugmentationConfig augmentation;

  BackboneSpec backbone;
  std::uint64_t init_seed = 0;

  /// Data sources for the CLI: an annotation file or "synthetic:N[:SEED]".
  std::string train_data;
  std::string test_data;

  /// Stop after this many epochs of the schedule (0 = run to the end); the
  /// schedule still spans `epochs`, so a later resume continues it exactly.
  int stop_after = 0;
  std::filesystem::path resume;

  int effective_epochs() const;
  /// Assigns one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Cross-field checks; throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Parses `key = value` lines; '#' starts a comment. Throws ConfigError with
/// the line number on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   const std::string& origin);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Splits "key=value"; throws ConfigError when there is no '='.
std::pair<std::string, std::string> parse_override(const std::string& kv);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double kl = 0.0;
  std::optional<double> val_mae;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  static EpochRecord from_json(const nlohmann::json& j);
};

struct TrainHistory {
  /// Mean training objective before the first update, evaluated in inference
  /// mode on un-augmented samples.
  double initial_loss = 0.0;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_mae = 0.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  bool completed = false;
};

/// Where a run writes its artifacts. With an empty directory nothing is
/// written; `metrics` (if set) receives one JSON object per epoch.
struct RunOutputs {
  std::filesystem::path dir;
  std::ostream* metrics = nullptr;
  std::string name = "model";
};

/// Frozen teachers for distillation: either models evaluated on each
/// augmented batch or a precomputed pseudo-label store keyed by sample id.
struct TeacherSet {
  std::vector<const PoseModel*> models;
  std::vector<std::string> names;
  const PseudoLabelStore* store = nullptr;
};

/// Hard-label training of `model` on `data` with the combined
/// classification and regression objective.
TrainHistory train_teacher(PoseModel& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                           const RunOutputs& out = {});

/// Distills `student` towards the uniform ensemble of the teachers' softmax
/// outputs. Teachers are only read.
TrainHistory distill_student(PoseModel& student, const TeacherSet& teachers, const std::vector<Sample>& data,
                             const TrainConfig& cfg, const RunOutputs& out = {});

/// Ensemble targets for samples (inference mode, no augmentation).
PseudoLabelStore compute_pseudo_labels(const std::vector<const PoseModel*>& teachers,
                                       const std::vector<std::string>& names, const std::vector<Sample>& data,
                                       int batch_size = 64);

/// Mean hard-label objective over `data` in inference mode.
double mean_hard_loss(const PoseModel& model, const std::vector<Sample>& data, double reg_weight = 1.0,
                      int batch_size = 64);

}  // namespace hpe
