// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hpe/error.hpp"
#include "hpe/training.hpp"

namespace hpe {

namespace {

constexpr const char* kModule = "training-engine";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
    throw ConfigError(kModule, "'" + key + "' expects a finite number, got '" + v + "'");
  }
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError(kModule, "'" + key + "' expects an integer, got '" + v + "'");
  }
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(kModule, "'" + key + "' expects true or false, got '" + v + "'");
}

void to_range(const std::string& key, const std::string& v, double& lo, double& hi) {
  const auto parts = split_list(v);
  if (parts.size() != 2) throw ConfigError(kModule, "'" + key + "' expects 'lo, hi', got '" + v + "'");
  lo = to_double(key, parts[0]);
  hi = to_double(key, parts[1]);
}

}  // namespace

int TrainConfig::effective_epochs() const {
  if (epochs > 0) return epochs;
  return mode == TrainMode::hard ? 100 : 200;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto positive_int = [&]() {
    const long long i = to_int(key, v);
    if (i <= 0) throw ConfigError(kModule, "'" + key + "' must be positive");
    return static_cast<int>(i);
  };
  auto non_negative = [&]() {
    const double d = to_double(key, v);
    if (d < 0) throw ConfigError(kModule, "'" + key + "' must be non-negative");
    return d;
  };

  if (key == "mode") {
    if (v == "hard") {
      mode = TrainMode::hard;
    } else if (v == "distill") {
      mode = TrainMode::distill;
    } else {
      throw ConfigError(kModule, "'mode' must be hard or distill, got '" + v + "'");
    }
  } else if (key == "epochs") {
    epochs = positive_int();
  } else if (key == "lr") {
    lr = to_double(key, v);
    if (lr <= 0) throw ConfigError(kModule, "'lr' must be positive");
  } else if (key == "lr_floor") {
    lr_floor = non_negative();
  } else if (key == "batch_size") {
    batch_size = positive_int();
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(to_int(key, v));
  } else if (key == "reg_weight") {
    reg_weight = non_negative();
  } else if (key == "weight_decay") {
    weight_decay = non_negative();
  } else if (key == "temperature") {
    temperature = to_double(key, v);
    if (temperature <= 0) throw ConfigError(kModule, "'temperature' must be positive");
  } else if (key == "hard_weight") {
    hard_weight = non_negative();
  } else if (key == "teachers") {
    teacher_checkpoints.clear();
    for (const auto& p : split_list(v)) teacher_checkpoints.emplace_back(p);
  } else if (key == "pseudo_mode") {
    if (v == "on_the_fly") {
      pseudo_mode = PseudoMode::on_the_fly;
    } else if (v == "precomputed") {
      pseudo_mode = PseudoMode::precomputed;
    } else {
      throw ConfigError(kModule, "'pseudo_mode' must be on_the_fly or precomputed, got '" + v + "'");
    }
  } else if (key == "pseudo_labels") {
    pseudo_labels = v;
  } else if (key == "val_fraction") {
    val_fraction = to_double(key, v);
    if (val_fraction < 0 || val_fraction >= 1) throw ConfigError(kModule, "'val_fraction' must lie in [0, 1)");
  } else if (key == "pose_filter") {
    pose_filter = to_bool(key, v);
  } else if (key == "downscale_range") {
    to_range(key, v, augmentation.downscale_lo, augmentation.downscale_hi);
  } else if (key == "brightness_delta") {
    augmentation.brightness_delta = non_negative();
  } else if (key == "contrast_range") {
    to_range(key, v, augmentation.contrast_lo, augmentation.contrast_hi);
  } else if (key == "blur_sigma_range") {
    to_range(key, v, augmentation.blur_sigma_lo, augmentation.blur_sigma_hi);
  } else if (key == "flip_prob") {
    augmentation.flip_prob = to_double(key, v);
  } else if (key == "augment") {
    if (v == "none") {
      const auto seed_keep = augmentation.seed;
      augmentation = AugmentationConfig::identity();
      augmentation.seed = seed_keep;
    } else if (v == "default") {
      augmentation = AugmentationConfig{};
    } else {
      throw ConfigError(kModule, "'augment' must be none or default, got '" + v + "'");
    }
  } else if (key == "backbone") {
    backbone.name = v;
  } else if (key.rfind("backbone.", 0) == 0) {
    backbone.params[key.substr(9)] = static_cast<int>(to_int(key, v));
  } else if (key == "init_seed") {
    init_seed = static_cast<std::uint64_t>(to_int(key, v));
  } else if (key == "train_data") {
    train_data = v;
  } else if (key == "test_data") {
    test_data = v;
  } else if (key == "stop_after") {
    stop_after = static_cast<int>(to_int(key, v));
    if (stop_after < 0) throw ConfigError(kModule, "'stop_after' must be non-negative");
  } else if (key == "resume") {
    resume = v;
  } else {
    throw ConfigError(kModule, "unknown config key '" + key + "'");
  }
}

void TrainConfig::validate() const {
  augmentation.validate();
  if (lr_floor > lr) throw ConfigError(kModule, "'lr_floor' exceeds 'lr'");
  const auto& names = nn::registered_backbones();
  if (std::find(names.begin(), names.end(), backbone.name) == names.end()) {
    throw ConfigError(kModule, "unknown backbone '" + backbone.name + "'");
  }
  if (mode == TrainMode::distill) {
    const bool have_store = pseudo_mode == PseudoMode::precomputed && !pseudo_labels.empty();
    if (teacher_checkpoints.empty() && !have_store) {
      throw ConfigError(kModule, "distillation needs at least one teacher checkpoint or a pseudo-label store");
    }
  }
  if (stop_after > effective_epochs()) throw ConfigError(kModule, "'stop_after' exceeds 'epochs'");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json teachers = nlohmann::json::array();
  for (const auto& t : teacher_checkpoints) teachers.push_back(t.string());
  return {{"mode", mode == TrainMode::hard ? "hard" : "distill"},
          {"epochs", effective_epochs()},
          {"lr", lr},
          {"lr_floor", lr_floor},
          {"batch_size", batch_size},
          {"seed", seed},
          {"reg_weight", reg_weight},
          {"weight_decay", weight_decay},
          {"temperature", temperature},
          {"hard_weight", hard_weight},
          {"teachers", teachers},
          {"pseudo_mode", pseudo_mode == PseudoMode::on_the_fly ? "on_the_fly" : "precomputed"},
          {"val_fraction", val_fraction},
          {"backbone", backbone.name},
          {"backbone_params", backbone.params},
          {"augmentation",
           {{"downscale_range", {augmentation.downscale_lo, augmentation.downscale_hi}},
            {"brightness_delta", augmentation.brightness_delta},
            {"contrast_range", {augmentation.contrast_lo, augmentation.contrast_hi}},
            {"blur_sigma_range", {augmentation.blur_sigma_lo, augmentation.blur_sigma_hi}},
            {"flip_prob", augmentation.flip_prob}}}};
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(kModule, origin + " line " + std::to_string(n) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(kModule, origin + " line " + std::to_string(n) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(kModule, "cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  TrainConfig cfg;
  for (const auto& [k, v] : parse_config_text(buf.str(), "'" + path.string() + "'")) {
    try {
      cfg.set(k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(kModule, "'" + path.string() + "': " + e.what());
    }
  }
  return cfg;
}

std::pair<std::string, std::string> parse_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(kModule, "override '" + kv + "' is not of the form key=value");
  }
  return {trim(kv.substr(0, eq)), trim(kv.substr(eq + 1))};
}

}  // namespace hpe
