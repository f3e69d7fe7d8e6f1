// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hpe/angle_codec.hpp"
#include "hpe/geometry.hpp"
#include "hpe/losses.hpp"

namespace hpe {

enum class Split { train, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// One annotated face: the source image, its (unsquared) face box and label.
struct SampleRecord {
  std::string id;
  std::filesystem::path image_path;
  BoundingBox box;
  EulerPose pose;
  Split split = Split::train;
  std::string source;
};

/// A preprocessed square crop ready for the model.
struct Sample {
  std::string id;
  Image image;
  EulerPose pose;
};

enum class AnnotationFormat { csv, jsonl };

/// Picks the format from the file extension (.csv, .jsonl/.ndjson).
AnnotationFormat annotation_format_for(const std::filesystem::path& path);

struct AnnotationSet {
  std::vector<SampleRecord> records;
  std::vector<std::string> warnings;
};

/// Reads annotations with required fields image, x1, y1, x2, y2, yaw, pitch,
/// roll and optional id, split, source. Relative image paths resolve against
/// the annotation file's directory. A missing column raises SchemaError naming
/// it; rows with non-finite poses or invalid boxes raise SchemaError citing
/// every offending line number.
AnnotationSet load_annotations(const std::filesystem::path& path, AnnotationFormat format);
AnnotationSet load_annotations(const std::filesystem::path& path);

/// Checks that every image decodes; returns one message per failure.
std::vector<std::string> validate_images(const std::vector<SampleRecord>& records);

/// Drops records with any |angle| > limit.
std::vector<SampleRecord> filter_pose_range(const std::vector<SampleRecord>& records, double limit = 93.0);

/// Squares the box, crops and resizes to `size`.
Sample preprocess(const SampleRecord& record, int size = 112);

struct AugmentationConfig {
  double downscale_lo = 0.2;
  double downscale_hi = 1.0;
  double brightness_delta = 0.25;
  double contrast_lo = 0.75;
  double contrast_hi = 1.25;
  double blur_sigma_lo = 0.0;
  double blur_sigma_hi = 2.0;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError on empty intervals or a probability outside [0, 1].
  void validate() const;
  /// Every step disabled.
  static AugmentationConfig identity();
};

struct Augmented {
  Image image;
  EulerPose pose;
  bool flipped = false;
};

/// Resolution jitter, brightness/contrast, Gaussian blur, then horizontal
/// flip, in that order. Every random value is drawn on every call so the
/// generator advances identically whatever the configuration.
Augmented augment(const Image& image, const EulerPose& pose, const AugmentationConfig& cfg,
                  std::mt19937_64& rng);

/// Procedural oracle images. On a black size x size canvas centred at
/// (size/2, size/2), three antialiased bars of half-thickness 3 px are drawn,
/// one per colour channel:
///   red   length 80, through the centre, tilted yaw/2 degrees from vertical
///   green length 60 + pitch * 4/9, horizontal, through the centre
///   blue  length 50, through the centre, tilted roll/2 degrees from horizontal
/// Mirroring the image negates yaw and roll and leaves pitch unchanged, so
/// horizontal flips keep labels exact.
Image render_synthetic(const EulerPose& pose, int size = 112);

/// n samples with poses uniform in [-90, 90]^3.
std::vector<Sample> make_synthetic_dataset(int n, std::uint64_t seed, int size = 112);

/// Indices split into train and holdout parts; the holdout holds
/// round(n * fraction) samples (at least one when fraction > 0 and n > 1).
struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};
HoldoutSplit split_holdout(std::size_t n, double fraction, std::uint64_t seed);

/// Teacher-ensemble targets in record order.
struct PseudoLabelStore {
  int version = 1;
  int num_bins = 62;
  std::vector<std::string> teacher_names;
  std::vector<std::string> ids;
  std::vector<PseudoLabel<float>> labels;
};

inline constexpr int kPseudoLabelVersion = 1;

/// Header {version, count, num_bins, teacher_names, ids}, then count x 3 x
/// num_bins float32 values.
void write_pseudo_labels(const std::filesystem::path& path, const PseudoLabelStore& store);
/// Throws LoadError on count or bin mismatches and truncated payloads.
PseudoLabelStore read_pseudo_labels(const std::filesystem::path& path, const BinGrid& grid = BinGrid::standard());

}  // namespace hpe
