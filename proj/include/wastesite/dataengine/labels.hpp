#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/month.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/dataengine/io.hpp"

namespace wastesite::data {

NLOHMANN_JSON_SERIALIZE_ENUM(PatchClass, {{PatchClass::positive, "positive"},
                                          {PatchClass::negative, "negative"},
                                          {PatchClass::unlabeled, "unlabeled"},
                                          {PatchClass::soft, "soft"}})

/// A curator decision turned into training data. Coordinates are geographic.
struct LabelRecord {
  std::string site_id;
  PatchClass label = PatchClass::negative;
  Point location;
  /// Blob scale in pixels; outlines a confirmed site that came without a boundary.
  double radius_px = 0.0;
  std::optional<Polygon> polygon;
  Month month;
  std::string source = "review";
  bool operator==(const LabelRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const LabelRecord& r) {
  j = {{"site_id", r.site_id}, {"class", r.label}, {"location", r.location}, {"radius_px", r.radius_px},
       {"month", r.month.str()}, {"source", r.source}};
  j["polygon"] = r.polygon ? nlohmann::json(*r.polygon) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, LabelRecord& r) {
  j.at("site_id").get_to(r.site_id);
  j.at("class").get_to(r.label);
  j.at("location").get_to(r.location);
  j.at("radius_px").get_to(r.radius_px);
  r.month = Month::parse(j.at("month").get<std::string>());
  j.at("source").get_to(r.source);
  r.polygon.reset();
  if (j.contains("polygon") && !j.at("polygon").is_null()) r.polygon = j.at("polygon").get<Polygon>();
}

/// Reads a JSON-lines label store; a missing file is an empty store.
inline std::vector<LabelRecord> read_label_store(const fs::path& path) {
  std::vector<LabelRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<LabelRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace detail {

/// Sutherland-Hodgman against the axis-aligned box [x0, x1] x [y0, y1].
inline Ring clip_ring(const Ring& r, double x0, double y0, double x1, double y1) {
  Ring cur = r;
  auto pass = [&](auto inside, auto cut) {
    Ring next;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const Point a = cur[(i + cur.size() - 1) % cur.size()], b = cur[i];
      const bool ia = inside(a), ib = inside(b);
      if (ib) {
        if (!ia) next.push_back(cut(a, b));
        next.push_back(b);
      } else if (ia) {
        next.push_back(cut(a, b));
      }
    }
    cur = std::move(next);
  };
  auto at_x = [](double x) {
    return [x](Point a, Point b) { return Point{x, a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)}; };
  };
  auto at_y = [](double y) {
    return [y](Point a, Point b) { return Point{a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y), y}; };
  };
  pass([&](Point p) { return p.x >= x0; }, at_x(x0));
  pass([&](Point p) { return p.x <= x1; }, at_x(x1));
  pass([&](Point p) { return p.y >= y0; }, at_y(y0));
  pass([&](Point p) { return p.y <= y1; }, at_y(y1));
  return cur;
}

inline Polygon disk_polygon(Point c, double r, int sides = 32) {
  Polygon p;
  for (int k = 0; k < sides; ++k) {
    const double a = 2.0 * std::numbers::pi * k / sides;
    p.outer.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  return p;
}

}  // namespace detail

/// Training regions for reviewed sites, cut from a raw field of the scene the labels refer
/// to. Each region covers the label's outline (at least one 28 x 28 patch, clamped to the
/// field); positives carry their outline in region pixel coordinates, clipped to the region.
inline std::vector<LabeledRegion> regions_from_labels(const std::vector<LabelRecord>& labels,
                                                      const SpectrogramField& field, const GeoTransform& geo) {
  if (field.normalized) throw DataError("review regions need a raw spectrogram field");
  if (field.width < kPatchSize || field.height < kPatchSize)
    throw ShapeError("field smaller than one patch");
  std::vector<LabeledRegion> out;
  for (const auto& l : labels) {
    if (l.label != PatchClass::positive && l.label != PatchClass::negative) continue;
    const Point c = geo.to_pixel(l.location);
    Polygon outline;
    if (l.polygon) outline = to_pixel(*l.polygon, geo);
    else outline = detail::disk_polygon(c, std::max(1.0, l.radius_px));
    Box b = bounds(outline.outer);
    b.expand(c);
    const double W = double(field.width), H = double(field.height);
    auto span = [](double lo, double hi, double limit) {
      const double side = std::max(double(kPatchSize), std::ceil(hi) - std::floor(lo));
      double start = std::floor(0.5 * (lo + hi) - 0.5 * side);
      start = std::clamp(start, 0.0, std::max(0.0, limit - side));
      return std::pair{start, std::min(side, limit - start)};
    };
    const auto [x0, w] = span(b.min_x, b.max_x, W);
    const auto [y0, h] = span(b.min_y, b.max_y, H);
    if (w <= 0.0 || h <= 0.0) continue;
    LabeledRegion r;
    r.id = "review-" + l.site_id;
    r.label = l.label;
    r.field = field.crop(std::size_t(x0), std::size_t(y0), std::size_t(w), std::size_t(h));
    if (l.label == PatchClass::positive) {
      Polygon local;
      auto shift = [&](const Ring& ring) {
        Ring s;
        for (const auto& p : ring) s.push_back({p.x - x0, p.y - y0});
        return detail::clip_ring(s, 0.0, 0.0, w, h);
      };
      local.outer = shift(outline.outer);
      for (const auto& hr : outline.holes) {
        auto s = shift(hr);
        if (s.size() >= 3) local.holes.push_back(std::move(s));
      }
      if (local.outer.size() >= 3) r.polygons.push_back(std::move(local));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wastesite::data
