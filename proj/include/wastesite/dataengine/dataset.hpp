#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/dataengine/spectrogram.hpp"

namespace wastesite::data {

inline constexpr std::size_t kPatchSize = 28;
inline constexpr std::size_t kPatchValues = kPatchSize * kPatchSize * kSpectrogramSize;

enum class PatchClass { positive, negative, unlabeled, soft };

struct PatchLabel {
  PatchClass kind = PatchClass::unlabeled;
  /// Target probability; 1 for positive, 0 for negative, fused value for soft.
  float p = 0.0f;

  static PatchLabel positive() { return {PatchClass::positive, 1.0f}; }
  static PatchLabel negative() { return {PatchClass::negative, 0.0f}; }
  static PatchLabel unlabeled() { return {PatchClass::unlabeled, 0.0f}; }
  static PatchLabel soft(float p) { return {PatchClass::soft, p}; }
  bool is_target() const noexcept { return kind != PatchClass::unlabeled; }
};

/// 28x28x24 HWC; channels 0-11 are the current composite, 12-23 the earlier one.
struct PatchTensor {
  std::vector<float> values;
  /// Per-pixel validity (28x28); empty means all valid.
  std::vector<std::uint8_t> valid;
  bool normalized = false;
  PatchLabel label;
  std::string id;
  std::uint32_t x0 = 0;
  std::uint32_t y0 = 0;
};

/// Copies the patch with top-left corner (x0, y0). Invalid pixels carry the field's zeros.
inline PatchTensor extract_patch(const SpectrogramField& field, std::size_t x0, std::size_t y0) {
  if (x0 + kPatchSize > field.width || y0 + kPatchSize > field.height) {
    throw ShapeError("patch at (" + std::to_string(x0) + ", " + std::to_string(y0) +
                     ") extends past the " + std::to_string(field.width) + "x" +
                     std::to_string(field.height) + " field");
  }
  PatchTensor p;
  p.values.resize(kPatchValues);
  p.x0 = static_cast<std::uint32_t>(x0);
  p.y0 = static_cast<std::uint32_t>(y0);
  p.normalized = field.normalized;
  p.valid.resize(kPatchSize * kPatchSize);
  for (std::size_t y = 0; y < kPatchSize; ++y) {
    const auto row = field.pixel(x0, y0 + y);
    std::copy_n(row.data(), kPatchSize * kSpectrogramSize,
                p.values.data() + y * kPatchSize * kSpectrogramSize);
    std::copy_n(field.valid.data() + (y0 + y) * field.width + x0, kPatchSize, p.valid.data() + y * kPatchSize);
  }
  return p;
}

/// A human-labeled region with raw (un-normalized) spectrograms. For positive regions,
/// `polygons` outline the waste in the region's own pixel coordinates.
struct LabeledRegion {
  std::string id;
  SpectrogramField field;
  PatchClass label = PatchClass::negative;
  std::vector<Polygon> polygons;
};

struct PixelDatasetOptions {
  double ndvi_threshold = 0.4;
  /// Cap on negatives after collection; 0 keeps all. Subsampling is seeded.
  std::size_t max_negatives = 0;
  std::uint64_t seed = 0;
};

struct PixelDataset {
  std::vector<Spectrogram> positives;
  std::vector<Spectrogram> negatives;
  NormStats stats;
  std::size_t ndvi_removed = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void check_polygon_inside(const LabeledRegion& r, const Polygon& poly) {
  const Box b = bounds(poly.outer);
  const auto w = static_cast<double>(r.field.width);
  const auto h = static_cast<double>(r.field.height);
  if (b.valid() && (b.min_x < 0.0 || b.min_y < 0.0 || b.max_x > w || b.max_y > h)) {
    throw DataError("region " + r.id + ": polygon extends outside the " +
                    std::to_string(r.field.width) + "x" + std::to_string(r.field.height) +
                    " region");
  }
}

}  // namespace detail

/// Positive spectrograms come from pixels whose centers fall inside a positive region's
/// polygons and whose NDVI is <= the threshold on both rows; negatives are every valid pixel
/// of negative regions. Statistics are fitted on the result, which is returned normalized.
inline PixelDataset assemble_pixel_dataset(std::span<const LabeledRegion> regions,
                                           const PixelDatasetOptions& opt = {}) {
  PixelDataset ds;
  for (const auto& r : regions) {
    if (r.field.normalized) throw DataError("region " + r.id + " holds normalized values");
    if (r.label == PatchClass::negative) {
      auto s = r.field.spectrograms();
      ds.negatives.insert(ds.negatives.end(), s.begin(), s.end());
      continue;
    }
    if (r.label != PatchClass::positive) continue;
    if (r.polygons.empty()) ds.warnings.push_back("region " + r.id + ": positive without polygons");
    for (std::size_t k = 0; k < r.polygons.size(); ++k) {
      const Polygon& poly = r.polygons[k];
      detail::check_polygon_inside(r, poly);
      const auto inside = rasterize(poly, r.field.width, r.field.height);
      std::size_t kept = 0;
      for (std::size_t y = 0; y < r.field.height; ++y) {
        for (std::size_t x = 0; x < r.field.width; ++x) {
          const std::size_t i = y * r.field.width + x;
          if (!inside[i] || !r.field.valid[i]) continue;
          const Spectrogram s = r.field.spectrogram(x, y);
          if (ndvi(s, 0) > opt.ndvi_threshold || ndvi(s, 1) > opt.ndvi_threshold) {
            ++ds.ndvi_removed;
            continue;
          }
          ds.positives.push_back(s);
          ++kept;
        }
      }
      if (kept == 0) {
        ds.warnings.push_back("region " + r.id + ": polygon " + std::to_string(k) +
                              " yields no positive spectrograms");
      }
    }
  }

  if (opt.max_negatives > 0 && ds.negatives.size() > opt.max_negatives) {
    CounterRng rng(opt.seed, 0x4E47ULL);
    rng.shuffle(std::span<Spectrogram>(ds.negatives));
    ds.negatives.resize(opt.max_negatives);
  }

  std::vector<Spectrogram> all;
  all.reserve(ds.positives.size() + ds.negatives.size());
  all.insert(all.end(), ds.positives.begin(), ds.positives.end());
  all.insert(all.end(), ds.negatives.begin(), ds.negatives.end());
  if (all.empty()) {
    ds.warnings.push_back("no spectrograms assembled; normalization statistics left empty");
    return ds;
  }
  ds.stats = NormStats::fit(all);
  for (auto& s : ds.positives) s = ds.stats.normalized(s);
  for (auto& s : ds.negatives) s = ds.stats.normalized(s);
  return ds;
}

}  // namespace wastesite::data
