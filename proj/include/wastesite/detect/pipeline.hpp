#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/raster.hpp"
#include "wastesite/dataengine/spectrogram.hpp"
#include "wastesite/detect/blobs.hpp"
#include "wastesite/detect/cross_validate.hpp"
#include "wastesite/detect/heatmap.hpp"
#include "wastesite/detect/patch_grid.hpp"

namespace wastesite::detect {

inline constexpr int kCompositeSpan = 3;

/// Spectrogram field for month t: composite over [t, t+3) paired with [t-6, t-3).
inline data::SpectrogramField paired_field(const std::vector<data::RasterFrame>& frames, Month t) {
  const auto now = data::min_composite(frames, data::Window{t, kCompositeSpan});
  const auto prev = data::min_composite(frames, data::Window{t - data::kPairOffsetMonths, kCompositeSpan});
  return data::build_spectrogram_field(now, prev);
}

/// Non-overlapping quarterly timesteps counted back from the end of the series:
/// t_k = last - 2 - 3k, keeping those whose lookback window starts at or after `first`.
inline std::vector<Month> detection_months(Month first, Month last, std::size_t timesteps) {
  if (timesteps == 0) throw ConfigError("detect.timesteps", "must be >= 1");
  std::vector<Month> out;
  for (std::size_t k = 0; k < timesteps; ++k) {
    const Month t = last - 2 - 3 * static_cast<int>(k);
    if (t - data::kPairOffsetMonths < first) break;
    out.push_back(t);
  }
  if (out.empty()) {
    throw DataError("no composite pair constructible between " + first.str() + " and " + last.str() +
                    "; detection needs at least 9 months of frames");
  }
  return out;
}

struct DetectionModels {
  const models::PixelClassifier& pixel;
  const models::PatchClassifier& patch;
  const data::NormStats& stats;
};

struct DetectionOptions {
  SensitivityMode mode;
  std::size_t timesteps = 2;
  std::size_t tiles = 4;
  std::size_t workers = 1;
  BlobParams blob;
};

struct DetectionResult {
  /// Most recent first.
  std::vector<Month> months;
  std::vector<Heatmap> heatmaps;
  Heatmap averaged;
  PatchScoreGrid grid;
  /// Every blob before cross-validation.
  std::vector<CandidateSite> blobs;
  CrossValidation validation;
  std::vector<std::string> report;

  const std::vector<CandidateSite>& candidates() const noexcept { return validation.kept; }
};

namespace detail {
template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(name) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(name) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string(name) + ": " + e.what());
  }
}
}  // namespace detail

/// compositing -> spectrograms -> heatmaps -> timestep average -> blobs -> patch cross-validation.
/// The patch grid runs on the most recent composite pair.
inline DetectionResult run_detection(const std::vector<data::RasterFrame>& frames, const DetectionModels& m,
                                     const DetectionOptions& opt, const GeoTransform& geo = {}) {
  if (frames.empty()) throw DataError("detection needs at least one frame");
  Month first = frames.front().timestamp, last = first;
  for (const auto& f : frames) {
    first = std::min(first, f.timestamp);
    last = std::max(last, f.timestamp);
  }
  DetectionResult r;
  r.months = detection_months(first, last, opt.timesteps);
  if (r.months.size() < opt.timesteps) {
    r.report.push_back("only " + std::to_string(r.months.size()) + " of " + std::to_string(opt.timesteps) +
                       " timesteps fit in " + first.str() + ".." + last.str());
  }
  const std::size_t tiles = std::max<std::size_t>(1, opt.tiles);
  data::SpectrogramField latest;
  for (std::size_t k = 0; k < r.months.size(); ++k) {
    const Month t = r.months[k];
    auto field = detail::stage("compositing", [&] { return m.stats.normalized(paired_field(frames, t)); });
    r.heatmaps.push_back(detail::stage("pixel inference", [&] {
      return infer_heatmap_tiled(m.pixel, field, tiles, tiles, opt.workers);
    }));
    if (k == 0) latest = std::move(field);
  }
  r.averaged = detail::stage("timestep averaging", [&] { return average_timesteps(r.heatmaps); });
  r.blobs = detail::stage("blob detection", [&] {
    return detect_blobs(r.averaged, opt.mode, geo, r.months.front(), opt.blob);
  });
  r.grid = detail::stage("patch inference", [&] { return infer_patch_grid(m.patch, latest, opt.workers); });
  r.validation = cross_validate(r.blobs, r.grid, opt.mode);
  r.report.insert(r.report.end(), r.validation.report.begin(), r.validation.report.end());
  return r;
}

/// Writes heatmaps/<month>, heatmaps/average (raster container), patch_grid.json,
/// candidates.geojson (accepted sites) and detection.json (summary incl. rejected blobs).
inline void write_detection(const std::filesystem::path& dir, const DetectionResult& r, const GeoTransform& geo,
                            const SensitivityMode& mode) {
  std::filesystem::create_directories(dir / "heatmaps");
  for (std::size_t k = 0; k < r.months.size(); ++k) write_heatmap(dir / "heatmaps" / r.months[k].str(), r.heatmaps[k], geo);
  write_heatmap(dir / "heatmaps" / "average", r.averaged, geo);
  data::write_json(dir / "patch_grid.json", r.grid, -1);
  data::write_json(dir / "candidates.geojson", candidates_geojson(r.validation.kept));
  nlohmann::json months = nlohmann::json::array();
  for (const auto& m : r.months) months.push_back(m.str());
  data::write_json(dir / "detection.json",
                   {{"mode", {{"name", mode.name}, {"pixel_threshold", mode.pixel_threshold},
                              {"min_sigma", mode.min_sigma}, {"patch_threshold", mode.patch_threshold}}},
                    {"months", months},
                    {"blobs", r.blobs.size()},
                    {"kept", r.validation.kept},
                    {"dropped", r.validation.dropped},
                    {"uncovered", r.validation.uncovered},
                    {"report", r.report}});
}

}  // namespace wastesite::detect
