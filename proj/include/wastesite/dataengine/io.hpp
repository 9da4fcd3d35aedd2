#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wastesite/core/binary_io.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/dataengine/raster.hpp"
#include "wastesite/dataengine/scene.hpp"

namespace wastesite::data {

namespace fs = std::filesystem;

inline constexpr int kRasterVersion = 1;
inline constexpr int kSceneVersion = 1;

/// Named float planes of equal size plus free-form metadata.
struct RasterFile {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::pair<std::string, std::vector<float>>> planes;
  nlohmann::json meta = nlohmann::json::object();

  const std::vector<float>& plane(const std::string& name) const {
    for (const auto& [n, v] : planes)
      if (n == name) return v;
    throw FormatError("raster has no plane '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& p : planes)
      if (p.first == name) return true;
    return false;
  }
};

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j, int indent = 1) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(indent) << '\n';
}

/// Writes `<base>.json` (sidecar) and `<base>.bin` (planes, little-endian float32, in
/// sidecar order, each width*height values row-major).
inline void write_raster(const fs::path& base, const RasterFile& r) {
  nlohmann::json side = r.meta;
  side["format"] = "wastesite-raster";
  side["version"] = kRasterVersion;
  side["width"] = r.width;
  side["height"] = r.height;
  side["dtype"] = "float32";
  side["byte_order"] = "little";
  side["data"] = base.filename().string() + ".bin";
  side["planes"] = nlohmann::json::array();
  io::ByteWriter w;
  for (const auto& [name, v] : r.planes) {
    if (v.size() != r.width * r.height) {
      throw ShapeError("plane '" + name + "' has " + std::to_string(v.size()) + " values for a " +
                       std::to_string(r.width) + "x" + std::to_string(r.height) + " raster");
    }
    side["planes"].push_back(name);
    w.f32s(std::span<const float>(v));
  }
  write_json(fs::path(base.string() + ".json"), side);
  io::write_file(base.string() + ".bin", w.str());
}

inline RasterFile read_raster(const fs::path& base) {
  const fs::path side_path = base.extension() == ".json" ? base : fs::path(base.string() + ".json");
  nlohmann::json side = read_json(side_path);
  if (side.value("format", "") != "wastesite-raster")
    throw FormatError(side_path.string() + " is not a raster sidecar");
  if (side.value("version", 0) != kRasterVersion) {
    throw FormatError(side_path.string() + ": unsupported raster version " +
                      side.value("version", nlohmann::json(nullptr)).dump());
  }
  RasterFile r;
  r.width = side.at("width").get<std::size_t>();
  r.height = side.at("height").get<std::size_t>();
  const auto bytes = io::read_file((side_path.parent_path() / side.at("data").get<std::string>()).string());
  io::ByteReader rd(bytes, side_path.string());
  for (const auto& name : side.at("planes")) {
    std::vector<float> v(r.width * r.height);
    rd.f32s(std::span<float>(v));
    r.planes.emplace_back(name.get<std::string>(), std::move(v));
  }
  if (!rd.at_end()) throw FormatError(side_path.string() + ": trailing bytes in raster data");
  for (const char* k : {"format", "version", "width", "height", "dtype", "byte_order", "data", "planes"})
    side.erase(k);
  r.meta = std::move(side);
  return r;
}

inline std::vector<float> to_floats(const std::vector<std::uint8_t>& v) {
  return {v.begin(), v.end()};
}

inline std::vector<std::uint8_t> to_flags(const std::vector<float>& v) {
  std::vector<std::uint8_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] != 0.0f;
  return out;
}

inline RasterFile frame_to_raster(const RasterFrame& f, const GeoTransform& geo) {
  RasterFile r;
  r.width = f.width;
  r.height = f.height;
  for (std::size_t b = 0; b < kBandCount; ++b) r.planes.emplace_back(std::string(kBandNames[b]), f.bands[b]);
  r.planes.emplace_back("mask", to_floats(f.mask));
  r.meta = {{"kind", "frame"}, {"bands", kBandNames}, {"timestamp", f.timestamp.str()}, {"geotransform", geo}};
  return r;
}

inline RasterFrame raster_to_frame(const RasterFile& r) {
  RasterFrame f(r.width, r.height, Month::parse(r.meta.at("timestamp").get<std::string>()));
  for (std::size_t b = 0; b < kBandCount; ++b) f.bands[b] = r.plane(std::string(kBandNames[b]));
  f.mask = to_flags(r.plane("mask"));
  return f;
}

inline RasterFile composite_to_raster(const Composite& c, const GeoTransform& geo) {
  RasterFile r;
  r.width = c.width;
  r.height = c.height;
  for (std::size_t b = 0; b < kBandCount; ++b) r.planes.emplace_back(std::string(kBandNames[b]), c.bands[b]);
  r.planes.emplace_back("valid", to_floats(c.valid));
  r.meta = {{"kind", "composite"},
            {"bands", kBandNames},
            {"window", {{"start", c.window.start.str()}, {"span", c.window.span}}},
            {"geotransform", geo}};
  return r;
}

// Scene directories: scene.json, frames/<YYYY-MM>.{json,bin}, landcover.{json,bin},
// truth.geojson and waterways.geojson (geographic coordinates).

inline Polygon to_geo(const Polygon& p, const GeoTransform& g) {
  Polygon out = p;
  for (auto& v : out.outer) v = g.to_geo(v);
  for (auto& h : out.holes)
    for (auto& v : h) v = g.to_geo(v);
  return out;
}

inline Polygon to_pixel(const Polygon& p, const GeoTransform& g) {
  Polygon out = p;
  for (auto& v : out.outer) v = g.to_pixel(v);
  for (auto& h : out.holes)
    for (auto& v : h) v = g.to_pixel(v);
  return out;
}

inline nlohmann::json features_geojson(const std::vector<PlantedFeature>& features, const GeoTransform& g) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& f : features) {
    nlohmann::json phases = nlohmann::json::array();
    nlohmann::json geometry = nullptr;
    for (const auto& ph : f.phases) {
      if (ph.polygon.outer.empty()) {
        phases.push_back({{"from", ph.from.str()}, {"polygon", nullptr}});
        continue;
      }
      const Polygon geo = to_geo(ph.polygon, g);
      if (geometry.is_null()) geometry = geojson::polygon(geo);
      phases.push_back({{"from", ph.from.str()}, {"polygon", geo}});
    }
    out.push_back(geojson::feature(geometry, {{"id", f.id},
                                              {"kind", f.kind},
                                              {"brightness", f.brightness},
                                              {"leaves_scar", f.leaves_scar},
                                              {"stripe_axis", f.stripe_axis},
                                              {"phases", phases}}));
  }
  return geojson::collection(out);
}

inline std::vector<PlantedFeature> parse_features_geojson(const nlohmann::json& fc, const GeoTransform& g) {
  std::vector<PlantedFeature> out;
  for (const auto& feat : fc.at("features")) {
    PlantedFeature f = feat.at("properties").get<PlantedFeature>();
    for (auto& ph : f.phases)
      if (!ph.polygon.outer.empty()) ph.polygon = to_pixel(ph.polygon, g);
    out.push_back(std::move(f));
  }
  return out;
}

inline nlohmann::json waterways_geojson(const std::vector<Waterway>& ways, const GeoTransform& g) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& w : ways) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& p : w.line) coords.push_back(g.to_geo(p));
    out.push_back(geojson::feature({{"type", "LineString"}, {"coordinates", coords}},
                                   {{"name", w.name}, {"tag", w.tag}}));
  }
  return geojson::collection(out);
}

/// Reads LineString, MultiLineString and Polygon features; polygons contribute their rings.
/// Coordinates are returned as stored (no transform).
inline std::vector<Waterway> parse_waterways_geojson(const nlohmann::json& fc) {
  std::vector<Waterway> out;
  for (const auto& feat : fc.at("features")) {
    const auto& props = feat.at("properties");
    const auto& geom = feat.at("geometry");
    const std::string type = geom.at("type").get<std::string>();
    const std::string name = props.value("name", "");
    const std::string tag = props.value("tag", type == "Polygon" ? "waterbody" : "river");
    auto line_of = [](const nlohmann::json& coords) {
      std::vector<Point> line;
      for (const auto& c : coords) line.push_back(c.get<Point>());
      return line;
    };
    if (type == "LineString") {
      out.push_back({name, tag, line_of(geom.at("coordinates"))});
    } else if (type == "MultiLineString") {
      for (const auto& part : geom.at("coordinates")) out.push_back({name, tag, line_of(part)});
    } else if (type == "Polygon") {
      for (const auto& ring : geom.at("coordinates")) out.push_back({name, tag, line_of(ring)});
    } else {
      throw FormatError("waterway feature '" + name + "' has unsupported geometry " + type);
    }
    for (const auto& w : out)
      if (w.line.size() < 2) throw FormatError("waterway '" + w.name + "' needs at least 2 vertices");
  }
  return out;
}

inline void write_scene(const fs::path& dir, const Scene& scene) {
  fs::create_directories(dir / "frames");
  const GeoTransform& g = scene.spec.geo;
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : scene.frames) {
    const std::string rel = "frames/" + f.timestamp.str();
    write_raster(dir / rel, frame_to_raster(f, g));
    frames.push_back(rel);
  }
  RasterFile lc;
  lc.width = scene.spec.width;
  lc.height = scene.spec.height;
  lc.planes.emplace_back("landcover", to_floats(scene.landcover));
  lc.meta = {{"kind", "landcover"},
             {"classes", {"vegetation", "farmland", "bare", "urban", "water"}},
             {"geotransform", g}};
  write_raster(dir / "landcover", lc);
  write_json(dir / "truth.geojson", features_geojson(scene.features, g));
  write_json(dir / "waterways.geojson", waterways_geojson(scene.waterways, g));
  write_json(dir / "scene.json", {{"format", "wastesite-scene"},
                                  {"version", kSceneVersion},
                                  {"width", scene.spec.width},
                                  {"height", scene.spec.height},
                                  {"bands", kBandNames},
                                  {"geotransform", g},
                                  {"frames", frames},
                                  {"truth", "truth.geojson"},
                                  {"waterways", "waterways.geojson"},
                                  {"spec", scene.spec}});
}

inline Scene read_scene(const fs::path& dir) {
  const nlohmann::json meta = read_json(dir / "scene.json");
  if (meta.value("format", "") != "wastesite-scene") throw FormatError((dir / "scene.json").string() + " is not a scene manifest");
  if (meta.value("version", 0) != kSceneVersion) throw FormatError("unsupported scene version");
  Scene s;
  s.spec = meta.at("spec").get<SceneSpec>();
  const GeoTransform g = meta.at("geotransform").get<GeoTransform>();
  s.spec.geo = g;
  for (const auto& rel : meta.at("frames")) s.frames.push_back(raster_to_frame(read_raster(dir / rel.get<std::string>())));
  if (fs::exists(dir / "landcover.json")) {
    const RasterFile lc = read_raster(dir / "landcover");
    const auto& p = lc.plane("landcover");
    s.landcover.assign(p.size(), 0);
    for (std::size_t i = 0; i < p.size(); ++i) s.landcover[i] = static_cast<std::uint8_t>(p[i]);
  }
  s.features = parse_features_geojson(read_json(dir / meta.value("truth", "truth.geojson")), g);
  auto ways = parse_waterways_geojson(read_json(dir / meta.value("waterways", "waterways.geojson")));
  for (auto& w : ways)
    for (auto& p : w.line) p = g.to_pixel(p);
  s.waterways = std::move(ways);
  return s;
}

}  // namespace wastesite::data
