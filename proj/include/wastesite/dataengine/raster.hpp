#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/month.hpp"

namespace wastesite::data {

inline constexpr std::size_t kBandCount = 12;

/// Sentinel-2 L1C band order used by every raster in the system.
inline constexpr std::array<std::string_view, kBandCount> kBandNames = {
    "B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B11", "B12"};

inline constexpr std::size_t kRedBand = 3;  // B4
inline constexpr std::size_t kNirBand = 7;  // B8

/// Planar storage: band b of pixel (x, y) lives at bands[b][y * width + x].
struct Planes {
  std::size_t width = 0;
  std::size_t height = 0;
  std::array<std::vector<float>, kBandCount> bands;

  Planes() = default;
  Planes(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h) {
    for (auto& b : bands) b.assign(w * h, fill);
  }

  std::size_t pixels() const noexcept { return width * height; }
  std::size_t index(std::size_t x, std::size_t y) const noexcept { return y * width + x; }
  float& at(std::size_t band, std::size_t x, std::size_t y) { return bands[band][index(x, y)]; }
  float at(std::size_t band, std::size_t x, std::size_t y) const { return bands[band][index(x, y)]; }
  bool same_size(const Planes& o) const noexcept { return width == o.width && height == o.height; }
};

/// One monthly acquisition. mask[i] != 0 marks cloud or shadow.
struct RasterFrame : Planes {
  std::vector<std::uint8_t> mask;
  Month timestamp;

  RasterFrame() = default;
  RasterFrame(std::size_t w, std::size_t h, Month t) : Planes(w, h), mask(w * h, 0), timestamp(t) {}

  void check() const {
    for (std::size_t b = 0; b < kBandCount; ++b) {
      if (bands[b].size() != pixels()) {
        throw ShapeError("frame " + timestamp.str() + " band " + std::string(kBandNames[b]) +
                         " has " + std::to_string(bands[b].size()) + " values, expected " +
                         std::to_string(pixels()));
      }
    }
    if (mask.size() != pixels()) throw ShapeError("frame " + timestamp.str() + " mask size mismatch");
  }
};

/// Compositing window: months [start, start + span).
struct Window {
  Month start;
  int span = 3;

  bool contains(Month m) const noexcept { return m >= start && m < start + span; }
  std::string str() const { return start.str() + "+" + std::to_string(span); }
  bool operator==(const Window&) const = default;
};

struct Composite : Planes {
  Window window;
  /// valid[i] == 0 where every input was masked; band values there are 0.
  std::vector<std::uint8_t> valid;

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }
};

/// Per-pixel, per-band minimum over the unmasked frames that fall in `window`.
/// Frames outside the window are ignored.
inline Composite min_composite(const std::vector<const RasterFrame*>& frames, Window window) {
  std::vector<const RasterFrame*> in;
  for (const auto* f : frames)
    if (window.contains(f->timestamp)) in.push_back(f);
  if (in.empty()) {
    std::string have;
    for (const auto* f : frames) have += (have.empty() ? "" : ", ") + f->timestamp.str();
    throw DataError("no frames fall in compositing window " + window.str() + "; available: [" +
                    have + "]");
  }
  const std::size_t w = in.front()->width;
  const std::size_t h = in.front()->height;
  for (const auto* f : in) {
    f->check();
    if (f->width != w || f->height != h) {
      throw ShapeError("frame " + f->timestamp.str() + " is " + std::to_string(f->width) + "x" +
                       std::to_string(f->height) + ", expected " + std::to_string(w) + "x" +
                       std::to_string(h));
    }
  }

  Composite c;
  c.width = w;
  c.height = h;
  c.window = window;
  c.valid.assign(w * h, 0);
  constexpr float kInf = std::numeric_limits<float>::infinity();
  for (auto& b : c.bands) b.assign(w * h, kInf);

  for (const auto* f : in) {
    const std::uint8_t* mask = f->mask.data();
    for (std::size_t i = 0; i < w * h; ++i) c.valid[i] |= mask[i] == 0;
    for (std::size_t b = 0; b < kBandCount; ++b) {
      float* dst = c.bands[b].data();
      const float* src = f->bands[b].data();
      for (std::size_t i = 0; i < w * h; ++i) {
        if (mask[i] == 0 && src[i] < dst[i]) dst[i] = src[i];
      }
    }
  }
  for (auto& b : c.bands)
    for (std::size_t i = 0; i < w * h; ++i)
      if (!c.valid[i]) b[i] = 0.0f;
  return c;
}

inline Composite min_composite(const std::vector<RasterFrame>& frames, Window window) {
  std::vector<const RasterFrame*> ptrs;
  ptrs.reserve(frames.size());
  for (const auto& f : frames) ptrs.push_back(&f);
  return min_composite(ptrs, window);
}

/// Pixel-space crop [x0, x0 + w) x [y0, y0 + h) of any planar raster.
template <class P>
P crop(const P& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > src.width || y0 + h > src.height) throw ShapeError("crop outside raster bounds");
  P out = src;
  out.width = w;
  out.height = h;
  auto cut = [&](const auto& plane, auto& dst) {
    dst.assign(w * h, {});
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(plane.begin() + static_cast<std::ptrdiff_t>((y0 + y) * src.width + x0), w,
                  dst.begin() + static_cast<std::ptrdiff_t>(y * w));
  };
  for (std::size_t b = 0; b < kBandCount; ++b) cut(src.bands[b], out.bands[b]);
  if constexpr (requires { src.mask; }) cut(src.mask, out.mask);
  if constexpr (requires { src.valid; }) cut(src.valid, out.valid);
  return out;
}

}  // namespace wastesite::data
