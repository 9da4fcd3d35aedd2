#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/config.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/month.hpp"
#include "wastesite/dataengine/raster.hpp"
#include "wastesite/detect/heatmap.hpp"
#include "wastesite/detect/pipeline.hpp"
#include "wastesite/monitor/contours.hpp"

namespace wastesite::monitor {

inline constexpr double kFootprintThreshold = 0.5;
inline constexpr std::size_t kRollingWindow = 8;
/// 10 m pixels: 100 m^2 = 0.01 ha each.
inline constexpr double kHectaresPerPixel = 0.01;

struct MonitorOptions {
  double footprint_threshold = kFootprintThreshold;
  std::size_t window = kRollingWindow;
  double hectares_per_pixel = kHectaresPerPixel;
};

inline MonitorOptions monitor_options_from_config(const nlohmann::json& cfg) {
  const ConfigView m = ConfigView(cfg).section("monitor");
  MonitorOptions o;
  o.footprint_threshold = m.number("footprint_threshold");
  o.window = m.count("window");
  const double mpp = m.number("meters_per_pixel");
  if (!(o.footprint_threshold >= 0.0 && o.footprint_threshold <= 1.0))
    throw ConfigError(m.key("footprint_threshold"), "must lie in [0, 1]");
  if (!(mpp > 0.0)) throw ConfigError(m.key("meters_per_pixel"), "must be > 0");
  o.hectares_per_pixel = mpp * mpp / 10000.0;
  return o;
}

/// Pixel window of the scene watched for one site.
struct Region {
  std::size_t x0 = 0, y0 = 0, width = 0, height = 0;
};

struct Gap {
  Month month;
  std::string reason;
};

struct MonthlySeries {
  std::vector<Month> months;
  std::vector<detect::Heatmap> heatmaps;
  std::vector<Gap> gaps;
};

/// One heatmap per month t with a composite over [t, t+3) and its lookback [t-6, t-3);
/// months whose pair cannot be formed or holds no valid pixel are reported as gaps.
inline MonthlySeries monthly_heatmaps(const std::vector<data::RasterFrame>& frames, const Region& region,
                                      const models::PixelClassifier& net, const data::NormStats& stats) {
  if (frames.empty()) throw DataError("monitoring needs a non-empty frame catalog");
  Month first = frames.front().timestamp, last = first;
  for (const auto& f : frames) {
    first = std::min(first, f.timestamp);
    last = std::max(last, f.timestamp);
  }
  std::vector<data::RasterFrame> cut;
  cut.reserve(frames.size());
  for (const auto& f : frames) {
    if (region.x0 + region.width > f.width || region.y0 + region.height > f.height || region.width == 0 || region.height == 0)
      throw ShapeError("monitoring region lies outside the " + std::to_string(f.width) + "x" + std::to_string(f.height) + " scene");
    cut.push_back(data::crop(f, region.x0, region.y0, region.width, region.height));
  }
  MonthlySeries s;
  for (Month t = first + data::kPairOffsetMonths; t <= last; t = t + 1) {
    data::SpectrogramField field;
    try {
      field = detect::paired_field(cut, t);
    } catch (const DataError& e) {
      s.gaps.push_back({t, e.what()});
      continue;
    }
    if (std::none_of(field.valid.begin(), field.valid.end(), [](std::uint8_t v) { return v != 0; })) {
      s.gaps.push_back({t, "composite pair fully masked"});
      continue;
    }
    s.months.push_back(t);
    s.heatmaps.push_back(detect::infer_heatmap(net, stats.normalized(std::move(field)), region.x0, region.y0));
  }
  return s;
}

/// Current frame times the thresholded median of up to `window` following frames. Pixels
/// with no valid following value, including every pixel of the last frame, pass unmasked.
inline detect::Heatmap rolling_mask(const std::vector<detect::Heatmap>& series, std::size_t index,
                                    const MonitorOptions& opt = {}) {
  if (index >= series.size())
    throw std::out_of_range("rolling mask index " + std::to_string(index) + " outside a series of " + std::to_string(series.size()));
  const auto& cur = series[index];
  const std::size_t stop = std::min(series.size(), index + 1 + opt.window);
  for (std::size_t k = index + 1; k < stop; ++k)
    if (!series[k].same_size(cur)) throw ShapeError("heatmap series frames differ in size");
  detect::Heatmap out = cur;
  std::vector<float> vals;
  for (std::size_t i = 0; i < cur.pixels(); ++i) {
    vals.clear();
    for (std::size_t k = index + 1; k < stop; ++k)
      if (series[k].valid[i]) vals.push_back(series[k].scores[i]);
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    const double median = n % 2 ? vals[n / 2] : 0.5 * (double(vals[n / 2 - 1]) + double(vals[n / 2]));
    if (median < opt.footprint_threshold) out.scores[i] = 0.0f;
  }
  return out;
}

struct FootprintRecord {
  Month month;
  /// Scene pixel coordinates.
  std::vector<Polygon> polygons;
  std::size_t pixels = 0;
  double hectares = 0.0;
};

struct FootprintSeries {
  std::string site_id;
  std::vector<FootprintRecord> records;
};

/// Masks each frame with its rolling median, traces the contours and books the area.
inline FootprintSeries footprint_series(const std::string& site_id, const MonthlySeries& s,
                                        const MonitorOptions& opt = {}) {
  FootprintSeries fp{site_id, {}};
  for (std::size_t k = 0; k < s.heatmaps.size(); ++k) {
    if (k && !(s.months[k - 1] < s.months[k])) throw DataError("heatmap series months must strictly increase");
    const auto masked = rolling_mask(s.heatmaps, k, opt);
    FootprintRecord r{s.months[k], extract_contours(masked, opt.footprint_threshold), 0, 0.0};
    r.pixels = static_cast<std::size_t>(std::llround(pixel_area(r.polygons)));
    r.hectares = double(r.pixels) * opt.hectares_per_pixel;
    fp.records.push_back(std::move(r));
  }
  return fp;
}

struct AreaSeries {
  std::vector<std::pair<Month, double>> points;
  /// Absent for an empty series.
  std::optional<double> mean;
};

inline AreaSeries area_series(const FootprintSeries& fp) {
  AreaSeries a;
  double sum = 0.0;
  for (const auto& r : fp.records) {
    a.points.emplace_back(r.month, r.hectares);
    sum += r.hectares;
  }
  if (!a.points.empty()) a.mean = sum / double(a.points.size());
  return a;
}

/// FeatureCollection with one MultiPolygon feature per month, months ascending.
inline nlohmann::json contours_geojson(const FootprintSeries& fp, const GeoTransform& geo) {
  auto features = nlohmann::json::array();
  for (const auto& r : fp.records) {
    auto coords = nlohmann::json::array();
    for (const auto& p : r.polygons) coords.push_back(geojson::polygon_coordinates(data::to_geo(p, geo)));
    features.push_back(geojson::feature({{"type", "MultiPolygon"}, {"coordinates", coords}},
                                        {{"month", r.month.str()}, {"area_ha", r.hectares}, {"pixels", r.pixels}}));
  }
  auto fc = geojson::collection(std::move(features));
  fc["site_id"] = fp.site_id;
  return fc;
}

/// Inverse of contours_geojson; polygons come back in scene pixel coordinates.
inline FootprintSeries parse_contours_geojson(const nlohmann::json& fc, const GeoTransform& geo) {
  FootprintSeries fp;
  try {
    fp.site_id = fc.value("site_id", "");
    for (const auto& f : fc.at("features")) {
      const auto& p = f.at("properties");
      FootprintRecord r;
      r.month = Month::parse(p.at("month").get<std::string>());
      r.hectares = p.at("area_ha").get<double>();
      r.pixels = p.at("pixels").get<std::size_t>();
      for (const auto& c : f.at("geometry").at("coordinates"))
        r.polygons.push_back(data::to_pixel(geojson::parse_polygon_coordinates(c), geo));
      fp.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("contour collection: ") + e.what());
  }
  return fp;
}

}  // namespace wastesite::monitor
