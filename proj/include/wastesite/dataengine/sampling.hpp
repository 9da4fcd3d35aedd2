#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wastesite/core/config.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/dataengine/scene.hpp"

namespace wastesite::data {

// Training data drawn from a generated scene, standing in for hand-labelled patches: the
// planted polygons play the labeller's outlines.

/// Which pixels hold a feature through both compositing windows of month t.
struct SceneTruth {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> waste;
  std::vector<std::uint8_t> greenhouse;
  /// Union of every feature's extent over the whole series.
  std::vector<std::uint8_t> any_feature;
};

/// A pixel counts when the feature covers it in every month of [t-6, t-3) and [t, t+3).
inline SceneTruth scene_truth(const Scene& s, Month t) {
  const std::size_t w = s.spec.width, h = s.spec.height;
  SceneTruth tr{w, h, std::vector<std::uint8_t>(w * h, 0), std::vector<std::uint8_t>(w * h, 0),
                std::vector<std::uint8_t>(w * h, 0)};
  const Month months[] = {t - 6, t - 5, t - 4, t, t + 1, t + 2};
  for (const auto& f : s.features) {
    std::vector<std::uint8_t> all(w * h, 1);
    for (Month m : months) {
      const auto mask = feature_mask(f, m, w, h);
      for (std::size_t i = 0; i < all.size(); ++i) all[i] &= mask[i];
    }
    auto& dst = f.kind == FeatureKind::waste_site ? tr.waste : tr.greenhouse;
    for (std::size_t i = 0; i < all.size(); ++i) dst[i] |= all[i];
    const auto ext = feature_extent(f, w, h);
    for (std::size_t i = 0; i < ext.size(); ++i) tr.any_feature[i] |= ext[i];
  }
  return tr;
}

struct SamplingOptions {
  /// Jittered patches around each waste site.
  std::size_t patches_per_site = 6;
  /// Jittered patches around each greenhouse, labelled negative.
  std::size_t patches_per_confounder = 4;
  /// Background patches away from every feature.
  std::size_t background_patches = 24;
  /// Background regions for the pixel dataset.
  std::size_t background_regions = 8;
  /// Largest offset of a site patch from the site centre.
  int jitter = 6;
  /// A positive patch holds at least this many waste pixels.
  std::size_t min_positive_pixels = 12;
  std::uint64_t seed = 0;
};

inline SamplingOptions sampling_options_from_config(const nlohmann::json& cfg) {
  const ConfigView s = ConfigView(cfg).section("sampling");
  SamplingOptions o;
  o.patches_per_site = s.count("patches_per_site");
  o.patches_per_confounder = s.count("patches_per_confounder");
  o.background_patches = s.count("background_patches");
  o.background_regions = s.count("background_regions");
  o.jitter = static_cast<int>(s.count("jitter"));
  o.min_positive_pixels = s.count("min_positive_pixels");
  return o;
}

namespace detail {

inline std::size_t count_in(const std::vector<std::uint8_t>& m, std::size_t w, std::size_t x0, std::size_t y0,
                            std::size_t side) {
  std::size_t n = 0;
  for (std::size_t y = y0; y < y0 + side; ++y)
    for (std::size_t x = x0; x < x0 + side; ++x) n += m[y * w + x];
  return n;
}

inline std::size_t clamp_origin(double centre, int offset, std::size_t limit) {
  const double o = std::floor(centre) - double(kPatchSize / 2) + offset;
  return static_cast<std::size_t>(std::clamp(o, 0.0, double(limit - kPatchSize)));
}

}  // namespace detail

/// Pixel-classifier regions: one positive region per waste site present at t, outlined by
/// its polygon at t, plus background windows clear of every feature. Greenhouses stay out of
/// the pixel set; their spectrum is the waste spectrum, so only the patch stage can tell.
inline std::vector<LabeledRegion> scene_pixel_regions(const Scene& s, const SpectrogramField& raw, Month t,
                                                      const SamplingOptions& opt, const std::string& prefix = "scene") {
  if (raw.normalized) throw DataError("pixel regions need a raw spectrogram field");
  const std::size_t w = s.spec.width, h = s.spec.height;
  if (raw.width != w || raw.height != h) throw ShapeError("spectrogram field does not match the scene size");
  if (w < kPatchSize || h < kPatchSize) throw ShapeError("scene smaller than one patch");
  const SceneTruth truth = scene_truth(s, t);
  std::vector<LabeledRegion> out;
  for (const auto& f : s.features) {
    if (f.kind != FeatureKind::waste_site) continue;
    const Polygon* poly = f.polygon_at(t);
    if (!poly) continue;
    const Box b = bounds(poly->outer);
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.min_x) - 2));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.min_y) - 2));
    const auto x1 = std::min<std::size_t>(w, static_cast<std::size_t>(std::ceil(b.max_x)) + 2);
    const auto y1 = std::min<std::size_t>(h, static_cast<std::size_t>(std::ceil(b.max_y)) + 2);
    LabeledRegion r;
    r.id = prefix + ":" + f.id;
    r.label = PatchClass::positive;
    r.field = raw.crop(x0, y0, x1 - x0, y1 - y0);
    Polygon local = *poly;
    for (auto& v : local.outer) v = {v.x - double(x0), v.y - double(y0)};
    for (auto& hr : local.holes)
      for (auto& v : hr) v = {v.x - double(x0), v.y - double(y0)};
    r.polygons.push_back(std::move(local));
    out.push_back(std::move(r));
  }
  CounterRng rng(opt.seed, 0x5245ULL);
  std::size_t made = 0;
  for (std::size_t attempt = 0; made < opt.background_regions && attempt < 200 * (opt.background_regions + 1); ++attempt) {
    const std::size_t x0 = rng.below(w - kPatchSize + 1), y0 = rng.below(h - kPatchSize + 1);
    if (detail::count_in(truth.any_feature, w, x0, y0, kPatchSize)) continue;
    out.push_back({prefix + ":bg" + std::to_string(made), raw.crop(x0, y0, kPatchSize, kPatchSize), PatchClass::negative, {}});
    ++made;
  }
  return out;
}

/// Labelled patches from a normalized field: jittered patches on waste sites (positive when
/// they hold enough waste), on greenhouses (negative, no waste inside) and on background
/// clear of every feature (negative). Ids are "<prefix>:<x0>,<y0>".
inline std::vector<PatchTensor> scene_patches(const Scene& s, const SpectrogramField& field, Month t,
                                              const SamplingOptions& opt, const std::string& prefix = "scene") {
  if (!field.normalized) throw DataError("scene patches need a normalized field");
  const std::size_t w = s.spec.width, h = s.spec.height;
  if (field.width != w || field.height != h) throw ShapeError("spectrogram field does not match the scene size");
  if (w < kPatchSize || h < kPatchSize) throw ShapeError("scene smaller than one patch");
  const SceneTruth truth = scene_truth(s, t);
  CounterRng rng(opt.seed, 0x5041ULL);
  std::vector<PatchTensor> out;
  auto emit = [&](std::size_t x0, std::size_t y0, PatchLabel label) {
    PatchTensor p = extract_patch(field, x0, y0);
    p.label = label;
    p.id = prefix + ":" + std::to_string(x0) + "," + std::to_string(y0);
    for (const auto& q : out)
      if (q.id == p.id) return;
    out.push_back(std::move(p));
  };
  auto jitter = [&] { return static_cast<int>(rng.below(2 * opt.jitter + 1)) - opt.jitter; };
  for (const auto& f : s.features) {
    if (!f.polygon_at(t)) continue;
    const Point c = centroid(f.polygon_at(t)->outer);
    const bool site = f.kind == FeatureKind::waste_site;
    const std::size_t n = site ? opt.patches_per_site : opt.patches_per_confounder;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t x0 = detail::clamp_origin(c.x, k ? jitter() : 0, w);
      const std::size_t y0 = detail::clamp_origin(c.y, k ? jitter() : 0, h);
      const std::size_t waste = detail::count_in(truth.waste, w, x0, y0, kPatchSize);
      if (site && waste >= opt.min_positive_pixels) emit(x0, y0, PatchLabel::positive());
      if (!site && waste == 0) emit(x0, y0, PatchLabel::negative());
    }
  }
  std::size_t made = 0;
  for (std::size_t attempt = 0; made < opt.background_patches && attempt < 200 * (opt.background_patches + 1); ++attempt) {
    const std::size_t x0 = rng.below(w - kPatchSize + 1), y0 = rng.below(h - kPatchSize + 1);
    if (detail::count_in(truth.any_feature, w, x0, y0, kPatchSize)) continue;
    const std::size_t before = out.size();
    emit(x0, y0, PatchLabel::negative());
    made += out.size() > before;
  }
  return out;
}

/// Same patches with their labels removed, as a pool for soft targets.
inline std::vector<PatchTensor> strip_labels(std::vector<PatchTensor> ps) {
  for (auto& p : ps) p.label = PatchLabel::unlabeled();
  return ps;
}

}  // namespace wastesite::data
