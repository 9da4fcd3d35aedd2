#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "json.hpp"

namespace wastesite {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Open ring: the closing edge from back() to front() is implicit.
using Ring = std::vector<Point>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
  bool operator==(const Polygon&) const = default;
};

struct Box {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void expand(Point p) noexcept {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  bool contains(Point p) const noexcept {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  bool valid() const noexcept { return min_x <= max_x && min_y <= max_y; }
  /// Euclidean distance from p to the box; 0 inside.
  double distance(Point p) const noexcept {
    const double dx = std::max({min_x - p.x, 0.0, p.x - max_x});
    const double dy = std::max({min_y - p.y, 0.0, p.y - max_y});
    return std::hypot(dx, dy);
  }
};

inline Box bounds(const Ring& ring) {
  Box b;
  for (const auto& p : ring) b.expand(p);
  return b;
}

/// Shoelace area; positive for counter-clockwise rings in a y-up frame.
inline double signed_area(const Ring& ring) {
  double a = 0.0;
  for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
    const Point& p = ring[i];
    const Point& q = ring[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

/// Outer area minus hole areas.
inline double area(const Polygon& poly) {
  double a = std::abs(signed_area(poly.outer));
  for (const auto& h : poly.holes) a -= std::abs(signed_area(h));
  return a;
}

/// Even-odd containment test.
inline bool contains(const Ring& ring, Point p) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Point& a = ring[i];
    const Point& b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

inline bool contains(const Polygon& poly, Point p) {
  if (!contains(poly.outer, p)) return false;
  for (const auto& h : poly.holes)
    if (contains(h, p)) return false;
  return true;
}

inline Point centroid(const Ring& ring) {
  const double a = signed_area(ring);
  if (std::abs(a) < 1e-12) {
    Point c;
    for (const auto& p : ring) {
      c.x += p.x;
      c.y += p.y;
    }
    if (!ring.empty()) {
      c.x /= static_cast<double>(ring.size());
      c.y /= static_cast<double>(ring.size());
    }
    return c;
  }
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
    const Point& p = ring[i];
    const Point& q = ring[(i + 1) % n];
    const double cross = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

/// Pixel-center rasterization, even-odd over all rings: cell (x, y) is set when
/// (x + 0.5, y + 0.5) lies inside. Row-major, width*height cells.
inline std::vector<std::uint8_t> rasterize(const Polygon& poly, std::size_t width,
                                           std::size_t height) {
  std::vector<std::uint8_t> out(width * height, 0);
  std::vector<double> xs;
  auto edges = [&](const Ring& r, double yc) {
    for (std::size_t i = 0, j = r.size() - 1; i < r.size(); j = i++) {
      const Point& a = r[i];
      const Point& b = r[j];
      if ((a.y > yc) != (b.y > yc)) xs.push_back((b.x - a.x) * (yc - a.y) / (b.y - a.y) + a.x);
    }
  };
  const Box box = bounds(poly.outer);
  if (!box.valid()) return out;
  const auto y_lo = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(box.min_y)));
  const auto y_hi = static_cast<std::ptrdiff_t>(
      std::min(static_cast<double>(height), std::ceil(box.max_y)));
  for (std::ptrdiff_t y = y_lo; y < y_hi; ++y) {
    const double yc = static_cast<double>(y) + 0.5;
    xs.clear();
    edges(poly.outer, yc);
    for (const auto& h : poly.holes) edges(h, yc);
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Centers x + 0.5 in [xs[k], xs[k+1]) (strict on the right, as in contains()).
      const double lo = std::ceil(xs[k] - 0.5);
      const double hi = std::ceil(xs[k + 1] - 0.5);
      const auto x0 = static_cast<std::ptrdiff_t>(std::max(0.0, lo));
      const auto x1 = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(width), hi));
      std::uint8_t* row = out.data() + static_cast<std::size_t>(y) * width;
      for (std::ptrdiff_t x = x0; x < x1; ++x) row[x] = 1;
    }
  }
  return out;
}

/// Distance from p to segment [a, b].
inline double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

namespace detail {
inline double orient(Point a, Point b, Point c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}
}  // namespace detail

/// True when two segments cross at a point interior to both.
inline bool segments_cross(Point a, Point b, Point c, Point d) {
  const double o1 = detail::orient(a, b, c);
  const double o2 = detail::orient(a, b, d);
  const double o3 = detail::orient(c, d, a);
  const double o4 = detail::orient(c, d, b);
  return ((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0));
}

/// No two non-adjacent edges cross. Shared vertices are allowed.
inline bool is_simple(const Ring& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) return false;
    }
  }
  return true;
}

/// Affine pixel-to-geographic mapping (GDAL ordering): x = c[0] + col*c[1] + row*c[2],
/// y = c[3] + col*c[4] + row*c[5]. Pixel (0,0) is the top-left corner of the first pixel.
struct GeoTransform {
  double c[6] = {0.0, 1.0, 0.0, 0.0, 0.0, -1.0};

  Point to_geo(Point px) const noexcept {
    return {c[0] + px.x * c[1] + px.y * c[2], c[3] + px.x * c[4] + px.y * c[5]};
  }
  Point to_pixel(Point geo) const noexcept {
    const double det = c[1] * c[5] - c[2] * c[4];
    const double dx = geo.x - c[0];
    const double dy = geo.y - c[3];
    return {(c[5] * dx - c[2] * dy) / det, (-c[4] * dx + c[1] * dy) / det};
  }

  /// North-up lon/lat grid of square `meters` pixels anchored at (lon, lat).
  static GeoTransform north_up(double lon, double lat, double meters) {
    constexpr double kMetersPerDegree = 111320.0;
    const double dlat = meters / kMetersPerDegree;
    const double dlon = meters / (kMetersPerDegree * std::cos(lat * std::numbers::pi / 180.0));
    return {{lon, dlon, 0.0, lat, 0.0, -dlat}};
  }

  bool operator==(const GeoTransform& o) const noexcept {
    return std::equal(std::begin(c), std::end(c), std::begin(o.c));
  }
};

/// Equirectangular lon/lat -> local metres about a reference point; adequate over a few km.
struct LocalProjection {
  double lon0 = 0.0;
  double lat0 = 0.0;

  Point to_meters(Point lonlat) const noexcept {
    constexpr double kMetersPerDegree = 111320.0;
    const double k = std::cos(lat0 * std::numbers::pi / 180.0);
    return {(lonlat.x - lon0) * kMetersPerDegree * k, (lonlat.y - lat0) * kMetersPerDegree};
  }
};

inline void to_json(nlohmann::json& j, const Point& p) { j = nlohmann::json::array({p.x, p.y}); }
inline void from_json(const nlohmann::json& j, Point& p) {
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const GeoTransform& g) {
  j = nlohmann::json::array();
  for (double v : g.c) j.push_back(v);
}
inline void from_json(const nlohmann::json& j, GeoTransform& g) {
  for (int i = 0; i < 6; ++i) g.c[i] = j.at(static_cast<std::size_t>(i)).get<double>();
}

namespace geojson {

/// GeoJSON rings repeat the first vertex at the end.
inline nlohmann::json ring(const Ring& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : r) out.push_back(p);
  if (!r.empty()) out.push_back(r.front());
  return out;
}

inline nlohmann::json polygon_coordinates(const Polygon& poly) {
  nlohmann::json coords = nlohmann::json::array({ring(poly.outer)});
  for (const auto& h : poly.holes) coords.push_back(ring(h));
  return coords;
}

inline nlohmann::json polygon(const Polygon& poly) {
  return {{"type", "Polygon"}, {"coordinates", polygon_coordinates(poly)}};
}

inline Ring parse_ring(const nlohmann::json& j) {
  Ring r;
  for (const auto& p : j) r.push_back(p.get<Point>());
  if (r.size() > 1 && r.front() == r.back()) r.pop_back();
  return r;
}

inline Polygon parse_polygon_coordinates(const nlohmann::json& coords) {
  Polygon poly;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (i == 0) poly.outer = parse_ring(coords[i]);
    else poly.holes.push_back(parse_ring(coords[i]));
  }
  return poly;
}

inline Polygon parse_polygon(const nlohmann::json& geometry) {
  return parse_polygon_coordinates(geometry.at("coordinates"));
}

inline nlohmann::json point(Point p) { return {{"type", "Point"}, {"coordinates", p}}; }

inline nlohmann::json feature(nlohmann::json geometry, nlohmann::json properties) {
  return {{"type", "Feature"}, {"geometry", std::move(geometry)}, {"properties", std::move(properties)}};
}

inline nlohmann::json collection(nlohmann::json features) {
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace geojson

/// Polygons serialize as GeoJSON coordinate arrays.
inline void to_json(nlohmann::json& j, const Polygon& p) { j = geojson::polygon_coordinates(p); }
inline void from_json(const nlohmann::json& j, Polygon& p) {
  p = geojson::parse_polygon_coordinates(j);
}

}  // namespace wastesite
