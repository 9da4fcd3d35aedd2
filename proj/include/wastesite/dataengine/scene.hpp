#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/month.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/dataengine/raster.hpp"

namespace wastesite::data {

using Spectrum = std::array<float, kBandCount>;

namespace signature {
// Broadband-bright, flat, low-NDVI: the planted waste material.
inline constexpr Spectrum waste = {0.280f, 0.290f, 0.300f, 0.310f, 0.310f, 0.310f,
                                   0.310f, 0.310f, 0.310f, 0.300f, 0.300f, 0.260f};
inline constexpr Spectrum green = {0.030f, 0.040f, 0.070f, 0.040f, 0.100f, 0.250f,
                                   0.320f, 0.360f, 0.370f, 0.380f, 0.200f, 0.100f};
inline constexpr Spectrum dry = {0.060f, 0.075f, 0.100f, 0.120f, 0.160f, 0.200f,
                                 0.230f, 0.250f, 0.260f, 0.270f, 0.300f, 0.220f};
inline constexpr Spectrum bare = {0.080f, 0.100f, 0.140f, 0.190f, 0.220f, 0.240f,
                                  0.260f, 0.280f, 0.290f, 0.290f, 0.360f, 0.320f};
inline constexpr Spectrum urban = {0.120f, 0.130f, 0.150f, 0.170f, 0.180f, 0.190f,
                                   0.200f, 0.210f, 0.210f, 0.200f, 0.240f, 0.220f};
inline constexpr Spectrum water = {0.080f, 0.070f, 0.060f, 0.040f, 0.030f, 0.020f,
                                   0.015f, 0.010f, 0.010f, 0.008f, 0.005f, 0.004f};
// Cleared ground left behind when waste is removed; darker than waste in every band.
inline constexpr Spectrum scar = {0.040f, 0.045f, 0.050f, 0.055f, 0.065f, 0.075f,
                                  0.085f, 0.095f, 0.100f, 0.100f, 0.150f, 0.130f};
inline constexpr Spectrum cloud = {0.520f, 0.510f, 0.500f, 0.500f, 0.500f, 0.490f,
                                   0.490f, 0.480f, 0.480f, 0.470f, 0.400f, 0.330f};
}  // namespace signature

enum class LandCover : std::uint8_t { vegetation, farmland, bare, urban, water };

enum class FeatureKind { waste_site, greenhouse };

NLOHMANN_JSON_SERIALIZE_ENUM(FeatureKind, {{FeatureKind::waste_site, "waste_site"},
                                           {FeatureKind::greenhouse, "greenhouse"}})

/// From `from` onwards the feature covers `polygon`; an empty outer ring means absent.
struct FeaturePhase {
  Month from;
  Polygon polygon;
};

struct PlantedFeature {
  std::string id;
  FeatureKind kind = FeatureKind::waste_site;
  /// Sorted by month; the feature is absent before the first phase.
  std::vector<FeaturePhase> phases;
  double brightness = 1.0;
  /// Whether ground once covered and later vacated shows the darker cleared-ground spectrum.
  bool leaves_scar = true;
  /// Greenhouse roofs run as 2-on/1-off stripes along x (axis 0) or y (axis 1).
  int stripe_axis = 0;

  const Polygon* polygon_at(Month m) const {
    const Polygon* out = nullptr;
    for (const auto& ph : phases)
      if (ph.from <= m) out = ph.polygon.outer.empty() ? nullptr : &ph.polygon;
    return out;
  }

  Point center() const {
    for (const auto& ph : phases)
      if (!ph.polygon.outer.empty()) return centroid(ph.polygon.outer);
    return {};
  }
};

struct SceneSpec {
  std::size_t width = 256;
  std::size_t height = 256;
  Month start{2019, 1};
  int months = 12;
  std::uint64_t seed = 0;
  /// Per-band Gaussian noise sigma on reflectance.
  double noise = 0.01;
  double cloud_fraction = 0.1;
  /// Chance that an unmasked haze layer is added to a frame.
  double haze_probability = 0.3;
  double haze_strength = 0.05;
  int random_sites = 0;
  int random_confounders = 0;
  double site_radius_min = 6.0;
  double site_radius_max = 11.0;
  double min_separation = 48.0;
  double border = 16.0;
  int rivers = 1;
  int canals = 0;
  /// Typical land-cover cell size in pixels.
  double cell_size = 40.0;
  std::vector<PlantedFeature> features;
  GeoTransform geo = GeoTransform::north_up(115.20, -8.40, 10.0);

  void validate() const {
    if (width < 1 || height < 1) throw ConfigError("scene.width", "scene must be at least 1x1");
    if (months < 1) throw ConfigError("scene.months", "must be >= 1");
    if (!(cloud_fraction >= 0.0 && cloud_fraction < 1.0))
      throw ConfigError("scene.cloud_fraction", "must lie in [0, 1)");
    if (!(noise >= 0.0)) throw ConfigError("scene.noise", "must be >= 0");
    if (!(site_radius_min > 0.0 && site_radius_max >= site_radius_min))
      throw ConfigError("scene.site_radius_min", "need 0 < min <= max");
    if (random_sites < 0 || random_confounders < 0)
      throw ConfigError("scene.random_sites", "counts must be >= 0");
  }
};

struct Waterway {
  std::string name;
  /// One of river, stream, canal, waterbody.
  std::string tag;
  /// Pixel coordinates.
  std::vector<Point> line;
};

struct Scene {
  SceneSpec spec;
  std::vector<RasterFrame> frames;
  /// Explicit and randomly placed features, pixel coordinates.
  std::vector<PlantedFeature> features;
  std::vector<Waterway> waterways;
  std::vector<std::uint8_t> landcover;

  Month first() const { return frames.front().timestamp; }
  Month last() const { return frames.back().timestamp; }
  const RasterFrame& frame(Month m) const {
    for (const auto& f : frames)
      if (f.timestamp == m) return f;
    throw NotFoundError("scene has no frame for " + m.str());
  }
};

/// Irregular star-shaped polygon; vertex angles are monotone so the ring is simple.
inline Polygon star_polygon(Point c, double radius, CounterRng& rng, int vertices = 12) {
  Polygon p;
  const double step = 2.0 * std::numbers::pi / vertices;
  const double phase = rng.uniform(0.0, step);
  for (int k = 0; k < vertices; ++k) {
    const double a = phase + step * (k + rng.uniform(-0.3, 0.3));
    const double r = radius * rng.uniform(0.75, 1.15);
    p.outer.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  return p;
}

inline Polygon rectangle(double x0, double y0, double w, double h) {
  return {{{x0, y0}, {x0 + w, y0}, {x0 + w, y0 + h}, {x0, y0 + h}}, {}};
}

/// Scales a polygon about its centroid.
inline Polygon scaled(const Polygon& p, double factor) {
  const Point c = centroid(p.outer);
  Polygon out = p;
  auto apply = [&](Ring& r) {
    for (auto& v : r) v = {c.x + (v.x - c.x) * factor, c.y + (v.y - c.y) * factor};
  };
  apply(out.outer);
  for (auto& h : out.holes) apply(h);
  return out;
}

namespace detail {

struct Cell {
  Point site;
  LandCover cover;
  double phase;
  double gain;
};

/// Sum of randomly placed Gaussian bumps, truncated at 3 radii for speed.
inline std::vector<float> smooth_field(std::size_t w, std::size_t h, CounterRng rng,
                                       double density, double r_lo, double r_hi) {
  std::vector<float> f(w * h, 0.0f);
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(density * static_cast<double>(w * h) / (64.0 * 64.0)));
  for (std::size_t k = 0; k < count; ++k) {
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double r = rng.uniform(r_lo, r_hi);
    const double amp = rng.uniform(0.5, 1.0);
    const auto x0 = static_cast<std::ptrdiff_t>(std::max(0.0, cx - 3 * r));
    const auto x1 = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(w), cx + 3 * r));
    const auto y0 = static_cast<std::ptrdiff_t>(std::max(0.0, cy - 3 * r));
    const auto y1 = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(h), cy + 3 * r));
    const double inv = -0.5 / (r * r);
    for (std::ptrdiff_t y = y0; y < y1; ++y)
      for (std::ptrdiff_t x = x0; x < x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        f[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] +=
            static_cast<float>(amp * std::exp((dx * dx + dy * dy) * inv));
      }
  }
  // Tiny index-keyed jitter breaks ties so quantile thresholds hit exact counts.
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] += static_cast<float>(1e-6 * CounterRng::to_unit(CounterRng::at(rng.key(), 77, i)));
  return f;
}

/// Marks exactly round(fraction * pixels) of the highest field values.
inline std::vector<std::uint8_t> quantile_mask(const std::vector<float>& field, double fraction) {
  std::vector<std::uint8_t> mask(field.size(), 0);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(field.size())));
  if (k == 0) return mask;
  std::vector<std::size_t> idx(field.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(),
                   [&](std::size_t a, std::size_t b) {
                     return field[a] > field[b] || (field[a] == field[b] && a < b);
                   });
  for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1;
  return mask;
}

inline double polyline_distance(Point p, const std::vector<Point>& line) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) d = std::min(d, segment_distance(p, line[i], line[i + 1]));
  return d;
}

inline void check_feature(const PlantedFeature& f, const SceneSpec& spec) {
  if (f.phases.empty()) throw DataError("feature " + f.id + " has no phases");
  for (std::size_t i = 1; i < f.phases.size(); ++i)
    if (!(f.phases[i - 1].from < f.phases[i].from))
      throw DataError("feature " + f.id + " phases are not in increasing month order");
  for (const auto& ph : f.phases) {
    for (const auto& v : ph.polygon.outer) {
      if (v.x < 0.0 || v.y < 0.0 || v.x > static_cast<double>(spec.width) ||
          v.y > static_cast<double>(spec.height)) {
        throw DataError("feature " + f.id + " extends outside the " + std::to_string(spec.width) +
                        "x" + std::to_string(spec.height) + " scene");
      }
    }
  }
}

}  // namespace detail

/// Pixel footprint of a feature at month m; greenhouse stripes are applied.
inline std::vector<std::uint8_t> feature_mask(const PlantedFeature& f, Month m, std::size_t w,
                                              std::size_t h) {
  const Polygon* poly = f.polygon_at(m);
  if (!poly) return std::vector<std::uint8_t>(w * h, 0);
  auto mask = rasterize(*poly, w, h);
  if (f.kind == FeatureKind::greenhouse) {
    const Box b = bounds(poly->outer);
    const auto ox = static_cast<std::ptrdiff_t>(std::floor(b.min_x));
    const auto oy = static_cast<std::ptrdiff_t>(std::floor(b.min_y));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::ptrdiff_t along = f.stripe_axis == 0 ? static_cast<std::ptrdiff_t>(x) - ox
                                                         : static_cast<std::ptrdiff_t>(y) - oy;
        if (((along % 3) + 3) % 3 == 2) mask[y * w + x] = 0;
      }
  }
  return mask;
}

/// Every pixel the feature ever covers (stripes ignored).
inline std::vector<std::uint8_t> feature_extent(const PlantedFeature& f, std::size_t w,
                                                std::size_t h) {
  std::vector<std::uint8_t> out(w * h, 0);
  for (const auto& ph : f.phases) {
    if (ph.polygon.outer.empty()) continue;
    const auto m = rasterize(ph.polygon, w, h);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] |= m[i];
  }
  return out;
}

/// Deterministic per seed. Explicit features are validated, then random sites and
/// confounders are placed with minimum center separation; frames follow.
inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t w = spec.width;
  const std::size_t h = spec.height;
  const CounterRng root(spec.seed);
  Scene scene;
  scene.spec = spec;

  // Land cover: Voronoi cells with per-cell seasonal phase and brightness gain.
  CounterRng cell_rng = root.fork(1);
  const auto n_cells = std::max<std::size_t>(
      4, static_cast<std::size_t>(static_cast<double>(w * h) / (spec.cell_size * spec.cell_size)));
  std::vector<detail::Cell> cells;
  constexpr double kCoverWeights[] = {0.35, 0.25, 0.15, 0.15, 0.10};
  for (std::size_t k = 0; k < n_cells; ++k) {
    detail::Cell c;
    c.site = {cell_rng.uniform(0.0, static_cast<double>(w)), cell_rng.uniform(0.0, static_cast<double>(h))};
    double u = cell_rng.uniform();
    int cover = 0;
    while (cover < 4 && u >= kCoverWeights[cover]) u -= kCoverWeights[cover++];
    c.cover = static_cast<LandCover>(cover);
    c.phase = cell_rng.uniform(0.0, 2.0 * std::numbers::pi);
    c.gain = cell_rng.uniform(0.9, 1.1);
    cells.push_back(c);
  }
  std::vector<std::uint32_t> cell_of(w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const Point p{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t k = 0; k < cells.size(); ++k) {
        const double dx = p.x - cells[k].site.x;
        const double dy = p.y - cells[k].site.y;
        const double d = dx * dx + dy * dy;
        if (d < best) {
          best = d;
          arg = static_cast<std::uint32_t>(k);
        }
      }
      cell_of[y * w + x] = arg;
    }
  scene.landcover.resize(w * h);
  for (std::size_t i = 0; i < w * h; ++i) scene.landcover[i] = static_cast<std::uint8_t>(cells[cell_of[i]].cover);

  // Waterways: meandering rivers across the scene and straight canals.
  CounterRng water_rng = root.fork(2);
  for (int r = 0; r < spec.rivers; ++r) {
    Waterway ww{"river-" + std::to_string(r), "river", {}};
    double y = water_rng.uniform(0.15, 0.85) * static_cast<double>(h);
    for (double x = 0.0;; x += 32.0) {
      ww.line.push_back({std::min(x, static_cast<double>(w)), y});
      if (x >= static_cast<double>(w)) break;
      y = std::clamp(y + water_rng.uniform(-14.0, 14.0), 0.0, static_cast<double>(h));
    }
    scene.waterways.push_back(std::move(ww));
  }
  for (int c = 0; c < spec.canals; ++c) {
    const double x = water_rng.uniform(0.1, 0.9) * static_cast<double>(w);
    scene.waterways.push_back({"canal-" + std::to_string(c), "canal", {{x, 0.0}, {x, static_cast<double>(h)}}});
  }
  for (const auto& ww : scene.waterways) {
    const double half = ww.tag == "canal" ? 1.0 : 1.5;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const Point p{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
        if (detail::polyline_distance(p, ww.line) < half)
          scene.landcover[y * w + x] = static_cast<std::uint8_t>(LandCover::water);
      }
  }

  // Features: explicit first, then random placements.
  for (const auto& f : spec.features) detail::check_feature(f, spec);
  scene.features = spec.features;
  std::vector<Point> centers;
  for (const auto& f : scene.features) centers.push_back(f.center());

  CounterRng place_rng = root.fork(3);
  auto place = [&](double clearance) -> Point {
    const double lo = std::max(spec.border, clearance);
    for (int attempt = 0; attempt < 20000; ++attempt) {
      const Point c{place_rng.uniform(lo, static_cast<double>(w) - lo),
                    place_rng.uniform(lo, static_cast<double>(h) - lo)};
      const auto i = static_cast<std::size_t>(c.y) * w + static_cast<std::size_t>(c.x);
      if (scene.landcover[i] == static_cast<std::uint8_t>(LandCover::water)) continue;
      bool ok = true;
      for (const auto& o : centers) ok = ok && std::hypot(c.x - o.x, c.y - o.y) >= spec.min_separation;
      if (!ok) continue;
      bool near_water = false;
      for (const auto& ww : scene.waterways) near_water = near_water || detail::polyline_distance(c, ww.line) < clearance + 2.0;
      if (near_water) continue;
      centers.push_back(c);
      return c;
    }
    throw DataError("could not place " + std::to_string(spec.random_sites + spec.random_confounders) +
                    " features with separation " + std::to_string(spec.min_separation) + " px in a " +
                    std::to_string(w) + "x" + std::to_string(h) + " scene");
  };
  for (int k = 0; k < spec.random_sites; ++k) {
    const double r = place_rng.uniform(spec.site_radius_min, spec.site_radius_max);
    const Point c = place(r * 1.2 + 1.0);
    PlantedFeature f;
    f.id = "site-" + std::to_string(k);
    f.kind = FeatureKind::waste_site;
    f.brightness = place_rng.uniform(0.9, 1.1);
    f.phases.push_back({spec.start, star_polygon(c, r, place_rng)});
    scene.features.push_back(std::move(f));
  }
  for (int k = 0; k < spec.random_confounders; ++k) {
    const double gw = std::floor(place_rng.uniform(16.0, 25.0));
    const double gh = std::floor(place_rng.uniform(16.0, 25.0));
    const Point c = place(0.75 * std::max(gw, gh) + 1.0);
    PlantedFeature f;
    f.id = "greenhouse-" + std::to_string(k);
    f.kind = FeatureKind::greenhouse;
    f.brightness = place_rng.uniform(0.95, 1.05);
    f.stripe_axis = static_cast<int>(place_rng.below(2));
    f.phases.push_back({spec.start, rectangle(std::round(c.x - gw / 2), std::round(c.y - gh / 2), gw, gh)});
    scene.features.push_back(std::move(f));
  }

  std::vector<std::vector<std::uint8_t>> extents;
  for (const auto& f : scene.features) extents.push_back(feature_extent(f, w, h));
  for (std::size_t a = 0; a < extents.size(); ++a)
    for (std::size_t b = a + 1; b < extents.size(); ++b)
      for (std::size_t i = 0; i < w * h; ++i)
        if (extents[a][i] && extents[b][i])
          throw DataError("features " + scene.features[a].id + " and " + scene.features[b].id + " overlap");

  // Frames.
  for (int k = 0; k < spec.months; ++k) {
    const Month m = spec.start + k;
    const CounterRng frame_rng = root.fork(1000 + static_cast<std::uint64_t>(k));
    RasterFrame frame(w, h, m);
    const double season = 2.0 * std::numbers::pi * (m.month() - 1) / 12.0;

    for (std::size_t i = 0; i < w * h; ++i) {
      const auto& cell = cells[cell_of[i]];
      const auto cover = static_cast<LandCover>(scene.landcover[i]);
      Spectrum s{};
      switch (cover) {
        case LandCover::vegetation: {
          const double g = 0.5 + 0.5 * std::sin(season + cell.phase);
          for (std::size_t b = 0; b < kBandCount; ++b)
            s[b] = static_cast<float>(cell.gain * (signature::dry[b] + g * (signature::green[b] - signature::dry[b])));
          break;
        }
        case LandCover::farmland: {
          const double g = std::clamp(1.5 * std::sin(season + cell.phase), 0.0, 1.0);
          for (std::size_t b = 0; b < kBandCount; ++b)
            s[b] = static_cast<float>(cell.gain * (signature::bare[b] + g * (signature::green[b] - signature::bare[b])));
          break;
        }
        case LandCover::bare:
          for (std::size_t b = 0; b < kBandCount; ++b) s[b] = static_cast<float>(cell.gain * signature::bare[b]);
          break;
        case LandCover::urban:
          for (std::size_t b = 0; b < kBandCount; ++b) s[b] = static_cast<float>(cell.gain * signature::urban[b]);
          break;
        case LandCover::water:
          s = signature::water;
          break;
      }
      for (std::size_t b = 0; b < kBandCount; ++b) frame.bands[b][i] = s[b];
    }

    for (std::size_t fi = 0; fi < scene.features.size(); ++fi) {
      const auto& f = scene.features[fi];
      const auto now = feature_mask(f, m, w, h);
      std::vector<std::uint8_t> before(w * h, 0);
      if (f.leaves_scar) {
        for (const auto& ph : f.phases) {
          if (ph.from > m || ph.polygon.outer.empty()) continue;
          const auto r = rasterize(ph.polygon, w, h);
          for (std::size_t i = 0; i < w * h; ++i) before[i] |= r[i];
        }
      }
      const Polygon* current = f.polygon_at(m);
      const auto hull = current ? rasterize(*current, w, h) : std::vector<std::uint8_t>(w * h, 0);
      for (std::size_t i = 0; i < w * h; ++i) {
        if (now[i]) {
          for (std::size_t b = 0; b < kBandCount; ++b)
            frame.bands[b][i] = static_cast<float>(f.brightness * signature::waste[b]);
        } else if (before[i] && !hull[i]) {
          for (std::size_t b = 0; b < kBandCount; ++b) frame.bands[b][i] = signature::scar[b];
        }
      }
    }

    if (spec.noise > 0.0) {
      for (std::size_t b = 0; b < kBandCount; ++b) {
        float* band = frame.bands[b].data();
        for (std::size_t i = 0; i < w * h; ++i) {
          double u1 = CounterRng::to_unit(CounterRng::at(frame_rng.key(), 2 * b, i));
          const double u2 = CounterRng::to_unit(CounterRng::at(frame_rng.key(), 2 * b + 1, i));
          u1 = std::max(u1, 1e-300);
          const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
          band[i] = std::max(0.0f, static_cast<float>(band[i] + spec.noise * z));
        }
      }
    }

    CounterRng weather = frame_rng.fork(9);
    if (spec.cloud_fraction > 0.0) {
      const auto field = detail::smooth_field(w, h, weather.fork(1), 2.0, 8.0, 28.0);
      frame.mask = detail::quantile_mask(field, spec.cloud_fraction);
      for (std::size_t i = 0; i < w * h; ++i)
        if (frame.mask[i])
          for (std::size_t b = 0; b < kBandCount; ++b) frame.bands[b][i] = signature::cloud[b];
    }
    if (spec.haze_probability > 0.0 && weather.uniform() < spec.haze_probability) {
      auto haze = detail::smooth_field(w, h, weather.fork(2), 1.0, 20.0, 60.0);
      const float peak = *std::max_element(haze.begin(), haze.end());
      for (std::size_t i = 0; i < w * h; ++i) {
        if (frame.mask[i]) continue;
        const auto d = static_cast<float>(spec.haze_strength) * std::min(1.0f, haze[i] / peak);
        for (std::size_t b = 0; b < kBandCount; ++b) frame.bands[b][i] += d;
      }
    }
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

// JSON for specs and features (pixel coordinates).

inline void to_json(nlohmann::json& j, const FeaturePhase& ph) {
  j = {{"from", ph.from.str()}, {"polygon", ph.polygon.outer.empty() ? nlohmann::json(nullptr) : nlohmann::json(ph.polygon)}};
}
inline void from_json(const nlohmann::json& j, FeaturePhase& ph) {
  ph.from = Month::parse(j.at("from").get<std::string>());
  ph.polygon = j.at("polygon").is_null() ? Polygon{} : j.at("polygon").get<Polygon>();
}

inline void to_json(nlohmann::json& j, const PlantedFeature& f) {
  j = {{"id", f.id},         {"kind", f.kind},
       {"phases", f.phases}, {"brightness", f.brightness},
       {"leaves_scar", f.leaves_scar}, {"stripe_axis", f.stripe_axis}};
}
inline void from_json(const nlohmann::json& j, PlantedFeature& f) {
  f.id = j.at("id").get<std::string>();
  f.kind = j.value("kind", FeatureKind::waste_site);
  f.phases = j.at("phases").get<std::vector<FeaturePhase>>();
  f.brightness = j.value("brightness", 1.0);
  f.leaves_scar = j.value("leaves_scar", true);
  f.stripe_axis = j.value("stripe_axis", 0);
}

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = {{"width", s.width},
       {"height", s.height},
       {"start", s.start.str()},
       {"months", s.months},
       {"seed", s.seed},
       {"noise", s.noise},
       {"cloud_fraction", s.cloud_fraction},
       {"haze_probability", s.haze_probability},
       {"haze_strength", s.haze_strength},
       {"random_sites", s.random_sites},
       {"random_confounders", s.random_confounders},
       {"site_radius_min", s.site_radius_min},
       {"site_radius_max", s.site_radius_max},
       {"min_separation", s.min_separation},
       {"border", s.border},
       {"rivers", s.rivers},
       {"canals", s.canals},
       {"cell_size", s.cell_size},
       {"features", s.features},
       {"geotransform", s.geo}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  const SceneSpec d;
  s.width = j.value("width", d.width);
  s.height = j.value("height", d.height);
  s.start = j.contains("start") ? Month::parse(j.at("start").get<std::string>()) : d.start;
  s.months = j.value("months", d.months);
  s.seed = j.value("seed", d.seed);
  s.noise = j.value("noise", d.noise);
  s.cloud_fraction = j.value("cloud_fraction", d.cloud_fraction);
  s.haze_probability = j.value("haze_probability", d.haze_probability);
  s.haze_strength = j.value("haze_strength", d.haze_strength);
  s.random_sites = j.value("random_sites", d.random_sites);
  s.random_confounders = j.value("random_confounders", d.random_confounders);
  s.site_radius_min = j.value("site_radius_min", d.site_radius_min);
  s.site_radius_max = j.value("site_radius_max", d.site_radius_max);
  s.min_separation = j.value("min_separation", d.min_separation);
  s.border = j.value("border", d.border);
  s.rivers = j.value("rivers", d.rivers);
  s.canals = j.value("canals", d.canals);
  s.cell_size = j.value("cell_size", d.cell_size);
  s.features = j.value("features", d.features);
  s.geo = j.value("geotransform", d.geo);
}

}  // namespace wastesite::data
