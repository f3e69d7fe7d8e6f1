// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpe/geometry.hpp"

namespace hpe::io {

/// Decodes PNG/JPEG/BMP/PPM into an RGB image with values in [0, 1].
Image read_image(const std::filesystem::path& path);

/// Writes an RGB image (values clamped to [0, 1], quantized to 8 bits).
void write_image(const std::filesystem::path& path, const Image& image);

/// Binary container shared by checkpoints and pseudo-label stores:
///
///   offset 0   8 bytes   magic (format specific, ASCII)
///   offset 8   8 bytes   header length H, unsigned little-endian
///   offset 16  H bytes   UTF-8 JSON header
///   offset 16+H          payload: little-endian IEEE-754 float32 values
struct Container {
  nlohmann::json header;
  std::vector<float> payload;
};

void write_container(const std::filesystem::path& path, const std::array<char, 8>& magic,
                     const nlohmann::json& header, std::span<const float> payload);

/// Throws LoadError (tagged with `module`) on a bad magic, a truncated file,
/// or a payload whose byte length is not a multiple of four.
Container read_container(const std::filesystem::path& path, const std::array<char, 8>& magic,
                         const std::string& module);

/// Fetches `key` from a JSON object or throws LoadError naming the field.
const nlohmann::json& require_field(const nlohmann::json& obj, const std::string& key,
                                    const std::string& module, const std::string& context);

}  // namespace hpe::io
