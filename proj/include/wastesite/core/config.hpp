#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/hash.hpp"

namespace wastesite {

/// Built-in configuration; config/default.json in the source tree holds the same document.
inline constexpr std::string_view kDefaultConfig = R"json({
  "scene": {
    "width": 256, "height": 256, "start": "2019-01", "months": 12, "seed": 0,
    "noise": 0.01, "cloud_fraction": 0.1, "haze_probability": 0.3, "haze_strength": 0.05,
    "random_sites": 6, "random_confounders": 3, "site_radius_min": 6.0, "site_radius_max": 11.0,
    "min_separation": 48.0, "border": 16.0, "rivers": 1, "canals": 0, "cell_size": 40.0
  },
  "sampling": {
    "patches_per_site": 6, "patches_per_confounder": 4, "background_patches": 24,
    "background_regions": 8, "jitter": 6, "min_positive_pixels": 12
  },
  "pixel": {
    "seed": 1, "epochs": 8, "batch_size": 128, "learning_rate": 0.001,
    "ndvi_threshold": 0.4, "max_negatives": 0
  },
  "teachers": {
    "seed_base": 100, "members": 32, "epochs": 6, "batch_size": 32, "learning_rate": 0.001,
    "augment": true, "workers": 1,
    "widths": { "conv": [32, 64, 128], "dense": [128, 64], "dropout": 0.4 }
  },
  "svm": { "C": 1.0, "gamma": 0.0, "tolerance": 0.001, "max_iterations": 200000 },
  "distill": {
    "holdout_fraction": 0.2, "epsilon": 0.001, "pixel_mean_threshold": 0.02,
    "seed": 7, "epochs": 6, "batch_size": 32, "learning_rate": 0.001, "augment": true,
    "widths": { "conv": [32, 64, 128], "dense": [128, 64], "dropout": 0.4 }
  },
  "detect": {
    "modes": {
      "low":  { "pixel_threshold": 0.9, "min_sigma": 5.0, "patch_threshold": 0.6 },
      "med":  { "pixel_threshold": 0.6, "min_sigma": 5.0, "patch_threshold": 0.6 },
      "high": { "pixel_threshold": 0.6, "min_sigma": 3.5, "patch_threshold": 0.3 }
    },
    "blob": { "num_sigma": 5, "sigma_ratio": 2.0, "threshold": 0.01, "overlap": 0.5 },
    "timesteps": 2, "tiles": 4, "workers": 1
  },
  "monitor": { "footprint_threshold": 0.5, "window": 8, "meters_per_pixel": 10.0 },
  "server": { "host": "127.0.0.1", "port": 8080, "store": "store" }
})json";

inline nlohmann::json default_config() { return nlohmann::json::parse(kDefaultConfig); }

inline nlohmann::json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open config " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("<root>", path.string() + ": " + e.what());
  }
}

inline std::string config_hash(const nlohmann::json& cfg) { return hex_digest(fnv1a64(cfg.dump()), 16); }

/// Read access to one config section that reports missing or mistyped keys by dotted path.
class ConfigView {
 public:
  ConfigView(const nlohmann::json& node, std::string path = {}) : node_(&node), path_(std::move(path)) {}

  std::string key(std::string_view name) const { return path_.empty() ? std::string(name) : path_ + "." + std::string(name); }

  bool has(std::string_view name) const { return node_->is_object() && node_->contains(name); }

  const nlohmann::json& raw(std::string_view name) const {
    if (!node_->is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
    const auto it = node_->find(name);
    if (it == node_->end()) throw ConfigError(key(name), "missing");
    return *it;
  }

  ConfigView section(std::string_view name) const {
    const auto& j = raw(name);
    if (!j.is_object()) throw ConfigError(key(name), "must be an object");
    return {j, key(name)};
  }

  template <class T>
  T get(std::string_view name) const {
    const auto& j = raw(name);
    try {
      return j.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key(name), "has the wrong type (" + std::string(j.type_name()) + ")");
    }
  }

  double number(std::string_view name) const {
    const auto& j = raw(name);
    if (!j.is_number()) throw ConfigError(key(name), "must be a number");
    return j.get<double>();
  }

  /// Non-negative integer.
  std::size_t count(std::string_view name) const {
    const auto& j = raw(name);
    if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(key(name), "must be a non-negative integer");
    return j.get<std::size_t>();
  }

  const nlohmann::json& json() const noexcept { return *node_; }
  const std::string& path() const noexcept { return path_; }

 private:
  const nlohmann::json* node_;
  std::string path_;
};

}  // namespace wastesite
