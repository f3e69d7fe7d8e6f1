// SPDX-License-Identifier: Apache-2.0
#include "hpe/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hpe/error.hpp"

namespace hpe::io {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("data-pipeline", "cannot decode image '" + path.string() + "'");
  Image img(bgr.cols, bgr.rows, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][2 - c] / 255.0f;
    }
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 3) throw InvalidInput("data-pipeline", "only 3-channel images can be written");
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) {
    throw IoError("data-pipeline", "cannot write image '" + path.string() + "'");
  }
}

void write_container(const std::filesystem::path& path, const std::array<char, 8>& magic,
                     const nlohmann::json& header, std::span<const float> payload) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("io", "cannot open '" + path.string() + "' for writing");
  const std::string text = header.dump();
  os.write(magic.data(), 8);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<std::uint32_t> words(payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) words[i] = to_le(std::bit_cast<std::uint32_t>(payload[i]));
  os.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!os) throw IoError("io", "write to '" + path.string() + "' failed");
}

Container read_container(const std::filesystem::path& path, const std::array<char, 8>& magic,
                         const std::string& module) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError(module, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw LoadError(module, "'" + path.string() + "' is truncated (no header)");
  if (std::memcmp(bytes.data(), magic.data(), 8) != 0) {
    throw LoadError(module, "'" + path.string() + "' has the wrong magic bytes");
  }
  const std::uint64_t hlen = get_u64(bytes.data() + 8);
  if (hlen > bytes.size() - 16) throw LoadError(module, "'" + path.string() + "' header is truncated");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(module, "'" + path.string() + "' header is not valid JSON: " + e.what());
  }
  const std::size_t rest = bytes.size() - 16 - hlen;
  if (rest % 4 != 0) throw LoadError(module, "'" + path.string() + "' payload is not a whole number of floats");
  c.payload.resize(rest / 4);
  const unsigned char* p = bytes.data() + 16 + hlen;
  for (std::size_t i = 0; i < c.payload.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, p + 4 * i, 4);
    c.payload[i] = std::bit_cast<float>(to_le(w));
  }
  return c;
}

const nlohmann::json& require_field(const nlohmann::json& obj, const std::string& key,
                                    const std::string& module, const std::string& context) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw LoadError(module, context + " is missing field '" + key + "'");
  }
  return obj.at(key);
}

}  // namespace hpe::io
