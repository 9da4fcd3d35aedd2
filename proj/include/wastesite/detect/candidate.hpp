#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/config.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/hash.hpp"
#include "wastesite/core/month.hpp"

namespace wastesite::detect {

/// Candidate-generation thresholds: pixel mask cut, smallest blob scale, patch acceptance.
struct SensitivityMode {
  std::string name;
  double pixel_threshold = 0.0;
  double min_sigma = 0.0;
  double patch_threshold = 0.0;
  bool operator==(const SensitivityMode&) const = default;
};

inline SensitivityMode mode_from_config(const nlohmann::json& cfg, const std::string& name) {
  const ConfigView modes = ConfigView(cfg).section("detect").section("modes");
  if (!modes.has(name)) throw ConfigError(modes.key(name), "unknown sensitivity mode");
  const ConfigView m = modes.section(name);
  SensitivityMode out{name, m.number("pixel_threshold"), m.number("min_sigma"), m.number("patch_threshold")};
  if (!(out.pixel_threshold >= 0.0 && out.pixel_threshold <= 1.0)) throw ConfigError(m.key("pixel_threshold"), "must lie in [0, 1]");
  if (!(out.patch_threshold >= 0.0 && out.patch_threshold <= 1.0)) throw ConfigError(m.key("patch_threshold"), "must lie in [0, 1]");
  if (!(out.min_sigma > 0.0)) throw ConfigError(m.key("min_sigma"), "must be > 0");
  return out;
}

enum class SiteStatus { candidate, confirmed, rejected };

NLOHMANN_JSON_SERIALIZE_ENUM(SiteStatus, {{SiteStatus::candidate, "candidate"},
                                          {SiteStatus::confirmed, "confirmed"},
                                          {SiteStatus::rejected, "rejected"}})

inline std::string to_string(SiteStatus s) { return nlohmann::json(s).get<std::string>(); }

struct CandidateSite {
  std::string id;
  /// Scene pixel coordinates of the blob centre (pixel centres at +0.5).
  Point pixel;
  Point geo;
  double sigma = 0.0;
  double pixel_score = 0.0;
  double patch_score = 0.0;
  std::string mode;
  SiteStatus status = SiteStatus::candidate;
  Month month;
  bool operator==(const CandidateSite&) const = default;
};

/// Opaque id: 15 hex digits of FNV-1a over the rounded geo centre and detection month.
inline std::string site_id(Point geo, Month month) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f@%s", geo.x, geo.y, month.str().c_str());
  return hex_digest(fnv1a64(buf), 15);
}

inline void to_json(nlohmann::json& j, const CandidateSite& c) {
  j = {{"id", c.id}, {"pixel", c.pixel}, {"geo", c.geo}, {"blob_sigma", c.sigma},
       {"pixel_score", c.pixel_score}, {"patch_score", c.patch_score}, {"mode", c.mode},
       {"status", c.status}, {"month", c.month.str()}};
}
inline void from_json(const nlohmann::json& j, CandidateSite& c) {
  j.at("id").get_to(c.id);
  j.at("pixel").get_to(c.pixel);
  j.at("geo").get_to(c.geo);
  j.at("blob_sigma").get_to(c.sigma);
  j.at("pixel_score").get_to(c.pixel_score);
  j.at("patch_score").get_to(c.patch_score);
  j.at("mode").get_to(c.mode);
  j.at("status").get_to(c.status);
  c.month = Month::parse(j.at("month").get<std::string>());
}

inline nlohmann::json candidate_feature(const CandidateSite& c) {
  return geojson::feature(geojson::point(c.geo),
                          {{"id", c.id}, {"mode", c.mode}, {"pixel_score", c.pixel_score},
                           {"patch_score", c.patch_score}, {"blob_sigma", c.sigma},
                           {"status", c.status}, {"month", c.month.str()},
                           {"pixel_x", c.pixel.x}, {"pixel_y", c.pixel.y}});
}

inline nlohmann::json candidates_geojson(const std::vector<CandidateSite>& cs) {
  auto features = nlohmann::json::array();
  for (const auto& c : cs) features.push_back(candidate_feature(c));
  return geojson::collection(std::move(features));
}

inline CandidateSite parse_candidate_feature(const nlohmann::json& f) {
  const auto& p = f.at("properties");
  CandidateSite c;
  p.at("id").get_to(c.id);
  p.at("mode").get_to(c.mode);
  p.at("pixel_score").get_to(c.pixel_score);
  p.at("patch_score").get_to(c.patch_score);
  p.at("blob_sigma").get_to(c.sigma);
  p.at("status").get_to(c.status);
  c.month = Month::parse(p.at("month").get<std::string>());
  c.pixel = {p.value("pixel_x", 0.0), p.value("pixel_y", 0.0)};
  f.at("geometry").at("coordinates").get_to(c.geo);
  return c;
}

inline std::vector<CandidateSite> parse_candidates_geojson(const nlohmann::json& fc) {
  std::vector<CandidateSite> out;
  try {
    for (const auto& f : fc.at("features")) out.push_back(parse_candidate_feature(f));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("candidate collection: ") + e.what());
  }
  return out;
}

}  // namespace wastesite::detect
