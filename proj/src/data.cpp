// SPDX-License-Identifier: Apache-2.0
#include "hpe/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include "hpe/error.hpp"
#include "hpe/io.hpp"

namespace hpe {

namespace {

constexpr const char* kModule = "data-pipeline";
constexpr std::array<char, 8> kPseudoMagic{'H', 'P', 'E', 'P', 'S', 'L', '0', '1'};
const std::vector<std::string> kRequired{"image", "x1", "y1", "x2", "y2", "yaw", "pitch", "roll"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// RFC 4180 style split: double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

/// Accepts anything strtod accepts, including "nan" and "inf"; finiteness is
/// checked by the caller so the diagnostic can name the field.
bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

/// Builds a record from string fields, appending a diagnostic for each
/// problem. Returns false when the row is rejected.
bool build_record(const std::map<std::string, std::string>& f, const std::filesystem::path& base, int line,
                  std::size_t index, SampleRecord& rec, std::vector<std::string>& problems) {
  const std::string where = "line " + std::to_string(line) + ": ";
  bool ok = true;
  double v[7];
  const char* numeric[7] = {"x1", "y1", "x2", "y2", "yaw", "pitch", "roll"};
  for (int i = 0; i < 7; ++i) {
    const std::string& text = f.at(numeric[i]);
    if (!parse_double(text, v[i])) {
      problems.push_back(where + numeric[i] + " is not a number ('" + text + "')");
      ok = false;
    } else if (!std::isfinite(v[i])) {
      problems.push_back(where + numeric[i] + " is not finite ('" + text + "')");
      ok = false;
    }
  }
  if (!ok) return false;
  rec.box = {static_cast<int>(std::lround(v[0])), static_cast<int>(std::lround(v[1])),
             static_cast<int>(std::lround(v[2])), static_cast<int>(std::lround(v[3]))};
  if (!rec.box.valid()) {
    problems.push_back(where + "box has non-positive width or height");
    return false;
  }
  rec.pose = {v[4], v[5], v[6]};
  const std::filesystem::path img = f.at("image");
  if (img.empty()) {
    problems.push_back(where + "image path is empty");
    return false;
  }
  rec.image_path = img.is_absolute() ? img : base / img;
  auto opt = [&](const char* key) {
    auto it = f.find(key);
    return it == f.end() ? std::string{} : it->second;
  };
  rec.id = opt("id").empty() ? std::to_string(index) : opt("id");
  rec.source = opt("source");
  try {
    rec.split = opt("split").empty() ? Split::train : parse_split(opt("split"));
  } catch (const Error& e) {
    problems.push_back(where + e.what());
    return false;
  }
  return true;
}

std::string json_field_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return os.str();
  }
  if (v.is_null()) return "nan";
  return v.dump();
}

void finish(std::vector<std::string>& problems, const std::filesystem::path& path) {
  if (problems.empty()) return;
  std::string msg = "rejected rows in '" + path.string() + "':";
  for (const auto& p : problems) msg += "\n  " + p;
  throw SchemaError(kModule, msg);
}

cv::Mat as_mat(Image& img) { return cv::Mat(img.height(), img.width(), CV_32FC3, img.pixels().data()); }

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw InvalidInput(kModule, "split must be 'train' or 'test', got '" + s + "'");
}

AnnotationFormat annotation_format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return AnnotationFormat::csv;
  if (ext == ".jsonl" || ext == ".ndjson") return AnnotationFormat::jsonl;
  throw InvalidInput(kModule, "cannot infer annotation format from '" + path.string() + "' (use .csv or .jsonl)");
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
  return load_annotations(path, annotation_format_for(path));
}

AnnotationSet load_annotations(const std::filesystem::path& path, AnnotationFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError(kModule, "cannot open annotation file '" + path.string() + "'");
  const auto base = path.parent_path();
  AnnotationSet set;
  std::vector<std::string> problems;
  std::string line;
  int line_no = 0;

  if (format == AnnotationFormat::csv) {
    std::vector<std::string> columns;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      if (columns.empty()) {
        columns = split_csv_line(line);
        for (const auto& req : kRequired) {
          if (std::find(columns.begin(), columns.end(), req) == columns.end()) {
            throw SchemaError(kModule, "'" + path.string() + "' is missing required column '" + req + "'");
          }
        }
        continue;
      }
      const auto cells = split_csv_line(line);
      if (cells.size() != columns.size()) {
        problems.push_back("line " + std::to_string(line_no) + ": expected " + std::to_string(columns.size()) +
                           " fields, found " + std::to_string(cells.size()));
        continue;
      }
      std::map<std::string, std::string> f;
      for (std::size_t i = 0; i < columns.size(); ++i) f[columns[i]] = cells[i];
      SampleRecord rec;
      if (build_record(f, base, line_no, set.records.size(), rec, problems)) set.records.push_back(std::move(rec));
    }
  } else {
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        problems.push_back("line " + std::to_string(line_no) + ": invalid JSON");
        continue;
      }
      if (!obj.is_object()) {
        problems.push_back("line " + std::to_string(line_no) + ": expected a JSON object");
        continue;
      }
      for (const auto& req : kRequired) {
        if (!obj.contains(req)) {
          throw SchemaError(kModule, "'" + path.string() + "' line " + std::to_string(line_no) +
                                         " is missing required field '" + req + "'");
        }
      }
      std::map<std::string, std::string> f;
      for (const auto& [k, v] : obj.items()) f[k] = json_field_text(v);
      SampleRecord rec;
      if (build_record(f, base, line_no, set.records.size(), rec, problems)) set.records.push_back(std::move(rec));
    }
  }
  finish(problems, path);
  if (set.records.empty()) set.warnings.push_back("'" + path.string() + "' contains no annotation rows");
  return set;
}

std::vector<std::string> validate_images(const std::vector<SampleRecord>& records) {
  std::vector<std::string> problems;
  for (const auto& r : records) {
    if (!std::filesystem::exists(r.image_path)) {
      problems.push_back(r.id + ": image not found '" + r.image_path.string() + "'");
      continue;
    }
    try {
      io::read_image(r.image_path);
    } catch (const Error& e) {
      problems.push_back(r.id + ": " + e.what());
    }
  }
  return problems;
}

std::vector<SampleRecord> filter_pose_range(const std::vector<SampleRecord>& records, double limit) {
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (std::abs(r.pose.yaw) <= limit && std::abs(r.pose.pitch) <= limit && std::abs(r.pose.roll) <= limit) {
      out.push_back(r);
    }
  }
  return out;
}

Sample preprocess(const SampleRecord& record, int size) {
  const Image img = io::read_image(record.image_path);
  auto crop = crop_and_resize(img, square_box(record.box), size);
  return {record.id, std::move(crop.image), record.pose};
}

void AugmentationConfig::validate() const {
  auto interval = [](double lo, double hi, const char* name) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ConfigError(kModule, std::string(name) + " interval is empty or not finite");
    }
  };
  interval(downscale_lo, downscale_hi, "downscale_range");
  interval(contrast_lo, contrast_hi, "contrast_range");
  interval(blur_sigma_lo, blur_sigma_hi, "blur_sigma_range");
  if (downscale_lo <= 0 || downscale_hi > 1) throw ConfigError(kModule, "downscale_range must lie in (0, 1]");
  if (contrast_lo < 0) throw ConfigError(kModule, "contrast_range must be non-negative");
  if (blur_sigma_lo < 0) throw ConfigError(kModule, "blur_sigma_range must be non-negative");
  if (!(brightness_delta >= 0)) throw ConfigError(kModule, "brightness_delta must be non-negative");
  if (!(flip_prob >= 0 && flip_prob <= 1)) throw ConfigError(kModule, "flip_prob must lie in [0, 1]");
}

AugmentationConfig AugmentationConfig::identity() {
  AugmentationConfig c;
  c.downscale_lo = c.downscale_hi = 1.0;
  c.brightness_delta = 0.0;
  c.contrast_lo = c.contrast_hi = 1.0;
  c.blur_sigma_lo = c.blur_sigma_hi = 0.0;
  c.flip_prob = 0.0;
  return c;
}

Augmented augment(const Image& image, const EulerPose& pose, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  if (image.width() != image.height() || image.channels() != 3) {
    throw InvalidInput(kModule, "augment expects a square 3-channel crop");
  }
  // Raw uniforms keep the draw count fixed regardless of the ranges.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double scale = cfg.downscale_lo + (cfg.downscale_hi - cfg.downscale_lo) * u(rng);
  const double bright = cfg.brightness_delta * (2.0 * u(rng) - 1.0);
  const double contrast = cfg.contrast_lo + (cfg.contrast_hi - cfg.contrast_lo) * u(rng);
  const double sigma = cfg.blur_sigma_lo + (cfg.blur_sigma_hi - cfg.blur_sigma_lo) * u(rng);
  const bool flip = u(rng) < cfg.flip_prob;

  const int size = image.width();
  Image out = image;
  const int small = std::max(1, static_cast<int>(std::floor(scale * size)));
  if (small < size) out = resize_bilinear(resize_bilinear(out, small, small), size, size);

  if (bright != 0.0 || contrast != 1.0) {
    // c * v + b + (1 - c) / 2 scales contrast about mid-grey.
    const float c = static_cast<float>(contrast);
    const float offset = static_cast<float>(bright + 0.5 * (1.0 - contrast));
    for (auto& v : out.pixels()) v = std::clamp(c * v + offset, 0.0f, 1.0f);
  }

  if (sigma > 1e-6) {
    cv::Mat m = as_mat(out);
    cv::GaussianBlur(m.clone(), m, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT_101);
  }

  if (flip) {
    auto f = flip_horizontal(out, pose);
    return {std::move(f.image), f.pose, true};
  }
  return {std::move(out), pose, false};
}

Image render_synthetic(const EulerPose& pose, int size) {
  constexpr double kRadius = 3.0;
  const double deg = M_PI / 180.0;
  const double cx = size / 2.0;
  const double cy = size / 2.0;
  struct Bar {
    double dx, dy, half;
  };
  const double yaw_t = pose.yaw / 2.0 * deg;
  const double roll_t = pose.roll / 2.0 * deg;
  const Bar bars[3] = {
      {std::sin(yaw_t), std::cos(yaw_t), 40.0},
      {1.0, 0.0, (60.0 + pose.pitch * 4.0 / 9.0) / 2.0},
      {std::cos(roll_t), std::sin(roll_t), 25.0},
  };
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    const double py = y + 0.5 - cy;
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5 - cx;
      for (int c = 0; c < 3; ++c) {
        const Bar& b = bars[c];
        const double t = std::clamp(px * b.dx + py * b.dy, -b.half, b.half);
        const double dist = std::hypot(px - t * b.dx, py - t * b.dy);
        img.at(y, x, c) = static_cast<float>(std::clamp(kRadius + 0.5 - dist, 0.0, 1.0));
      }
    }
  }
  return img;
}

std::vector<Sample> make_synthetic_dataset(int n, std::uint64_t seed, int size) {
  if (n <= 0) throw InvalidInput(kModule, "synthetic dataset size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-90.0, 90.0);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    EulerPose pose;
    pose.yaw = angle(rng);
    pose.pitch = angle(rng);
    pose.roll = angle(rng);
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06d", i);
    out.push_back({id, render_synthetic(pose, size), pose});
  }
  return out;
}

HoldoutSplit split_holdout(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) throw ConfigError(kModule, "holdout fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  if (fraction > 0 && n > 1) k = std::max<std::size_t>(k, 1);
  HoldoutSplit s;
  s.holdout.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void write_pseudo_labels(const std::filesystem::path& path, const PseudoLabelStore& store) {
  if (store.ids.size() != store.labels.size()) {
    throw InvalidInput(kModule, "pseudo-label ids and labels differ in length");
  }
  const auto bins = static_cast<std::size_t>(store.num_bins);
  std::vector<float> payload;
  payload.reserve(store.labels.size() * 3 * bins);
  for (std::size_t i = 0; i < store.labels.size(); ++i) {
    for (const auto& row : store.labels[i].rows) {
      if (row.size() != bins) throw InvalidInput(kModule, "pseudo label row has the wrong number of bins");
      double sum = 0;
      for (float p : row) sum += p;
      if (std::abs(sum - 1.0) > 1e-4) {
        throw InvalidInput(kModule, "pseudo label for '" + store.ids[i] + "' is not normalized");
      }
      payload.insert(payload.end(), row.begin(), row.end());
    }
  }
  nlohmann::json header{{"version", kPseudoLabelVersion},
                        {"count", store.labels.size()},
                        {"num_bins", store.num_bins},
                        {"teacher_names", store.teacher_names},
                        {"ids", store.ids}};
  io::write_container(path, kPseudoMagic, header, payload);
}

PseudoLabelStore read_pseudo_labels(const std::filesystem::path& path, const BinGrid& grid) {
  auto c = io::read_container(path, kPseudoMagic, kModule);
  const auto& h = c.header;
  const std::string ctx = "pseudo-label store '" + path.string() + "'";
  PseudoLabelStore s;
  try {
    s.version = io::require_field(h, "version", kModule, ctx).get<int>();
    if (s.version != kPseudoLabelVersion) {
      throw LoadError(kModule, ctx + ": unsupported version " + std::to_string(s.version));
    }
    const auto count = io::require_field(h, "count", kModule, ctx).get<std::size_t>();
    s.num_bins = io::require_field(h, "num_bins", kModule, ctx).get<int>();
    if (s.num_bins != grid.num_bins) {
      throw LoadError(kModule, ctx + ": num_bins is " + std::to_string(s.num_bins) + " but the codec uses " +
                                   std::to_string(grid.num_bins));
    }
    s.teacher_names = io::require_field(h, "teacher_names", kModule, ctx).get<std::vector<std::string>>();
    s.ids = h.contains("ids") ? h["ids"].get<std::vector<std::string>>() : std::vector<std::string>{};
    if (s.ids.empty()) {
      for (std::size_t i = 0; i < count; ++i) s.ids.push_back(std::to_string(i));
    }
    if (s.ids.size() != count) throw LoadError(kModule, ctx + ": ids list does not match count");
    const std::size_t per = 3 * static_cast<std::size_t>(s.num_bins);
    if (c.payload.size() != count * per) {
      throw LoadError(kModule, ctx + ": header count " + std::to_string(count) + " needs " +
                                   std::to_string(count * per) + " values but the payload holds " +
                                   std::to_string(c.payload.size()));
    }
    s.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t a = 0; a < 3; ++a) {
        const float* src = c.payload.data() + i * per + a * static_cast<std::size_t>(s.num_bins);
        s.labels[i].rows[a].assign(src, src + s.num_bins);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(kModule, ctx + ": malformed header (" + e.what() + ")");
  }
  return s;
}

}  // namespace hpe
