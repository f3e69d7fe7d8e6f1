// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpe/angle_codec.hpp"
#include "hpe/geometry.hpp"
#include "hpe/losses.hpp"
#include "hpe/nn/adam.hpp"
#include "hpe/nn/backbones.hpp"

namespace hpe {

struct BackboneSpec {
  std::string name = "tiny-cnn";
  /// Filled in from the architecture when the model is built.
  int feature_dim = 0;
  nn::BackboneParams params;

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

/// Per-channel input standardization applied inside the model.
struct Normalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

enum class InitMode { scratch, pretrained };

struct ModelOptions {
  BinGrid grid = BinGrid::standard();
  Normalization normalization;
  int input_size = 112;
  std::uint64_t seed = 0;
};

/// Backbone followed by three independent affine heads (yaw, pitch, roll),
/// each producing `grid.num_bins` logits.
class PoseModel {
 public:
  using Tensor = nn::Tensor<float>;

  explicit PoseModel(BackboneSpec spec, ModelOptions opts = {});
  PoseModel(PoseModel&&) noexcept = default;
  PoseModel& operator=(PoseModel&&) noexcept = default;

  const BackboneSpec& spec() const { return spec_; }
  const BinGrid& grid() const { return opts_.grid; }
  const Normalization& normalization() const { return opts_.normalization; }
  int input_size() const { return opts_.input_size; }
  const ModelOptions& options() const { return opts_; }

  /// Stacks images into a normalized NCHW batch. Throws InvalidInput if any
  /// image is not input_size x input_size x 3.
  Tensor make_batch(std::span<const Image> images) const;

  /// Inference-mode logits, [N, 3 * num_bins].
  Tensor infer(const Tensor& batch) const;
  std::vector<PoseLogits<float>> forward(std::span<const Image> images) const;

  /// Training-mode forward (batch statistics, caches for backward).
  Tensor train_forward(const Tensor& batch);
  /// Backpropagates d(loss)/d(logits) and accumulates parameter gradients.
  void train_backward(const Tensor& dlogits);

  EulerPose predict_pose(const Image& image) const;
  std::vector<EulerPose> predict_poses(std::span<const Image> images) const;

  /// Trainable parameters and buffers, in a stable order.
  std::vector<nn::ParamRef<float>> parameters();
  std::size_t parameter_count() const;
  /// FNV-1a over every parameter and buffer bit pattern.
  std::uint64_t checksum() const;

  PoseModel clone() const;
  /// Copies values of identically named and shaped tensors from `other`.
  void copy_state_from(const PoseModel& other);

  nn::Linear<float>& head(int angle) { return *heads_[static_cast<std::size_t>(angle)]; }

 private:
  std::vector<nn::ParamRef<float>> parameters_const() const;

  BackboneSpec spec_;
  ModelOptions opts_;
  nn::LayerPtr<float> backbone_;
  std::array<std::unique_ptr<nn::Linear<float>>, 3> heads_;
};

/// Optimizer and progress state stored alongside a model for resumable runs.
struct TrainingState {
  int epochs_completed = 0;
  long optimizer_steps = 0;
  std::map<std::string, std::vector<float>> first_moments;
  std::map<std::string, std::vector<float>> second_moments;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const PoseModel& model, const std::filesystem::path& path,
                     const TrainingState* state = nullptr);

struct CheckpointExpectation {
  std::optional<std::string> backbone;
  std::optional<BinGrid> grid;
};

PoseModel load_checkpoint(const std::filesystem::path& path, const CheckpointExpectation& expect = {});
/// Reads the optional training state; empty when the checkpoint has none.
std::optional<TrainingState> load_training_state(const std::filesystem::path& path);

}  // namespace hpe
