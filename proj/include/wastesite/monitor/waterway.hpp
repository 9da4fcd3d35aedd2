#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/scene.hpp"

namespace wastesite::monitor {

/// Polyline in a planar metric frame; a closed line tagged waterbody is an area.
struct WaterFeature {
  std::string name;
  std::string tag;
  std::vector<Point> line;
  Box box;

  bool is_area() const noexcept { return tag == "waterbody" && line.size() >= 4 && line.front() == line.back(); }
};

struct WaterwaySet {
  std::vector<WaterFeature> features;

  void add(std::string name, std::string tag, std::vector<Point> line) {
    if (line.size() < 2) throw DataError("waterway '" + name + "' needs at least 2 vertices");
    static const char* kTags[] = {"river", "stream", "canal", "waterbody"};
    if (std::find(std::begin(kTags), std::end(kTags), tag) == std::end(kTags))
      throw DataError("waterway '" + name + "' has unknown tag '" + tag + "'");
    WaterFeature f{std::move(name), std::move(tag), std::move(line), {}};
    for (const auto& p : f.line) f.box.expand(p);
    features.push_back(std::move(f));
  }
  bool empty() const noexcept { return features.empty(); }

  /// Scene waterways (pixel coordinates) scaled to metres.
  static WaterwaySet from_scene(const std::vector<data::Waterway>& ways, double meters_per_pixel) {
    WaterwaySet s;
    for (const auto& w : ways) {
      std::vector<Point> line;
      for (const auto& p : w.line) line.push_back({p.x * meters_per_pixel, p.y * meters_per_pixel});
      s.add(w.name, w.tag, std::move(line));
    }
    return s;
  }

  /// GeoJSON in lon/lat, projected to local metres about `proj`'s origin.
  static WaterwaySet from_geojson(const nlohmann::json& fc, const LocalProjection& proj) {
    WaterwaySet s;
    for (const auto& w : data::parse_waterways_geojson(fc)) {
      std::vector<Point> line;
      for (const auto& p : w.line) line.push_back(proj.to_meters(p));
      s.add(w.name, w.tag, std::move(line));
    }
    return s;
  }
};

struct WaterwayDistance {
  double meters = 0.0;
  std::string tag;
  std::string name;
  bool operator==(const WaterwayDistance&) const = default;
};

inline double feature_distance(Point p, const WaterFeature& f) {
  if (f.is_area() && contains(f.line, p)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < f.line.size(); ++i) best = std::min(best, segment_distance(p, f.line[i], f.line[i + 1]));
  return best;
}

/// Nearest feature; features whose bounding box is already farther than the best hit are
/// skipped, which leaves the minimum (and the first feature attaining it) unchanged. The
/// skip test carries slack so rounding in the box distance can never prune a true winner.
inline WaterwayDistance distance_to_waterway(Point p, const WaterwaySet& w) {
  if (w.empty()) throw DataError("distance to an empty waterway set");
  double best = std::numeric_limits<double>::infinity();
  const WaterFeature* hit = nullptr;
  for (const auto& f : w.features) {
    if (hit && f.box.distance(p) > best * (1.0 + 1e-9) + 1e-9) continue;
    const double d = feature_distance(p, f);
    if (d < best || !hit) {
      best = d;
      hit = &f;
    }
  }
  return {best, hit->tag, hit->name};
}

}  // namespace wastesite::monitor
