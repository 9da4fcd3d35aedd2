#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/dataengine/raster.hpp"

namespace wastesite::data {

inline constexpr std::size_t kSpectrogramSize = 2 * kBandCount;
inline constexpr int kPairOffsetMonths = 6;

/// Row 0 is the current composite, row 1 the composite six months earlier.
struct Spectrogram {
  std::array<float, kSpectrogramSize> values{};
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  bool normalized = false;

  float at(std::size_t row, std::size_t band) const { return values[row * kBandCount + band]; }
  float& at(std::size_t row, std::size_t band) { return values[row * kBandCount + band]; }
};

/// Spectrograms for a whole raster, pixel-major: the 24 values of pixel (x, y) start at
/// (y * width + x) * 24, laid out (row, band). This is also the channel layout of a patch.
struct SpectrogramField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
  bool normalized = false;
  Window now;
  Window prev;
  /// Pixel indices left out because a composite was invalid there.
  std::vector<std::size_t> omitted;

  std::size_t pixels() const noexcept { return width * height; }
  std::span<const float> pixel(std::size_t x, std::size_t y) const {
    return {values.data() + (y * width + x) * kSpectrogramSize, kSpectrogramSize};
  }
  std::span<float> pixel(std::size_t x, std::size_t y) {
    return {values.data() + (y * width + x) * kSpectrogramSize, kSpectrogramSize};
  }

  Spectrogram spectrogram(std::size_t x, std::size_t y) const {
    Spectrogram s;
    const auto src = pixel(x, y);
    std::copy(src.begin(), src.end(), s.values.begin());
    s.x = static_cast<std::uint32_t>(x);
    s.y = static_cast<std::uint32_t>(y);
    s.normalized = normalized;
    return s;
  }

  /// One spectrogram per valid pixel, row-major pixel order.
  std::vector<Spectrogram> spectrograms() const {
    std::vector<Spectrogram> out;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        if (valid[y * width + x]) out.push_back(spectrogram(x, y));
    return out;
  }

  SpectrogramField crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const {
    if (x0 + w > width || y0 + h > height) throw ShapeError("spectrogram crop outside field");
    SpectrogramField out;
    out.width = w;
    out.height = h;
    out.normalized = normalized;
    out.now = now;
    out.prev = prev;
    out.values.resize(w * h * kSpectrogramSize);
    out.valid.resize(w * h);
    for (std::size_t y = 0; y < h; ++y) {
      const auto src = pixel(x0, y0 + y);
      std::copy_n(src.data(), w * kSpectrogramSize, out.values.data() + y * w * kSpectrogramSize);
      std::copy_n(valid.data() + (y0 + y) * width + x0, w, out.valid.data() + y * w);
    }
    for (std::size_t i = 0; i < w * h; ++i)
      if (!out.valid[i]) out.omitted.push_back(i);
    return out;
  }
};

/// Pairs two composites six months apart into per-pixel spectrograms.
inline SpectrogramField build_spectrogram_field(const Composite& now, const Composite& prev) {
  if (prev.window.start != now.window.start - kPairOffsetMonths) {
    throw DataError("spectrogram pairing needs a 6-month offset, got current window " +
                    now.window.str() + " and previous window " + prev.window.str());
  }
  if (!now.same_size(prev)) {
    throw ShapeError("composite sizes differ: " + std::to_string(now.width) + "x" +
                     std::to_string(now.height) + " vs " + std::to_string(prev.width) + "x" +
                     std::to_string(prev.height));
  }
  SpectrogramField f;
  f.width = now.width;
  f.height = now.height;
  f.now = now.window;
  f.prev = prev.window;
  f.values.assign(f.pixels() * kSpectrogramSize, 0.0f);
  f.valid.assign(f.pixels(), 0);
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    if (!(now.valid[i] && prev.valid[i])) {
      f.omitted.push_back(i);
      continue;
    }
    f.valid[i] = 1;
    float* dst = f.values.data() + i * kSpectrogramSize;
    for (std::size_t b = 0; b < kBandCount; ++b) {
      dst[b] = now.bands[b][i];
      dst[kBandCount + b] = prev.bands[b][i];
    }
  }
  return f;
}

/// (NIR - Red) / (NIR + Red) on one row of raw reflectances; 0 when the sum is 0.
inline double ndvi(std::span<const float> spectrogram, std::size_t row) {
  const double nir = spectrogram[row * kBandCount + kNirBand];
  const double red = spectrogram[row * kBandCount + kRedBand];
  const double sum = nir + red;
  return sum == 0.0 ? 0.0 : (nir - red) / sum;
}

inline double ndvi(const Spectrogram& s, std::size_t row) {
  if (s.normalized) throw DataError("ndvi needs raw reflectances, got a normalized spectrogram");
  return ndvi(std::span<const float>(s.values), row);
}

/// Per-band z-scoring statistics, pooled over both temporal rows.
struct NormStats {
  std::array<double, kBandCount> mean{};
  std::array<double, kBandCount> stddev{};

  static NormStats fit(std::span<const Spectrogram> samples) {
    if (samples.empty()) throw DataError("normalization statistics need at least one sample");
    NormStats st;
    std::array<double, kBandCount> sum{}, sq{};
    for (const auto& s : samples) {
      if (s.normalized) throw DataError("normalization statistics need raw spectrograms");
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t b = 0; b < kBandCount; ++b) sum[b] += s.at(r, b);
    }
    const double n = 2.0 * static_cast<double>(samples.size());
    for (std::size_t b = 0; b < kBandCount; ++b) st.mean[b] = sum[b] / n;
    for (const auto& s : samples)
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t b = 0; b < kBandCount; ++b) {
          const double d = s.at(r, b) - st.mean[b];
          sq[b] += d * d;
        }
    for (std::size_t b = 0; b < kBandCount; ++b) {
      st.stddev[b] = std::sqrt(sq[b] / n);
      if (!(st.stddev[b] > 0.0)) {
        throw DataError("band " + std::string(kBandNames[b]) +
                        " has zero variance over the training set");
      }
    }
    return st;
  }

  /// In place on one pixel's 24 values.
  void normalize(std::span<float> v) const {
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t b = 0; b < kBandCount; ++b) {
        float& x = v[r * kBandCount + b];
        x = static_cast<float>((x - mean[b]) / stddev[b]);
      }
  }
  void denormalize(std::span<float> v) const {
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t b = 0; b < kBandCount; ++b) {
        float& x = v[r * kBandCount + b];
        x = static_cast<float>(x * stddev[b] + mean[b]);
      }
  }

  Spectrogram normalized(Spectrogram s) const {
    if (s.normalized) return s;
    normalize(s.values);
    s.normalized = true;
    return s;
  }

  /// Invalid pixels stay at 0.
  SpectrogramField normalized(SpectrogramField f) const {
    if (f.normalized) return f;
    for (std::size_t i = 0; i < f.pixels(); ++i) {
      if (!f.valid[i]) continue;
      normalize({f.values.data() + i * kSpectrogramSize, kSpectrogramSize});
    }
    f.normalized = true;
    return f;
  }

  bool operator==(const NormStats&) const = default;
};

inline void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"bands", kBandNames}, {"mean", s.mean}, {"std", s.stddev}};
}

inline void from_json(const nlohmann::json& j, NormStats& s) {
  s.mean = j.at("mean").get<std::array<double, kBandCount>>();
  s.stddev = j.at("std").get<std::array<double, kBandCount>>();
  for (std::size_t b = 0; b < kBandCount; ++b) {
    if (!(s.stddev[b] > 0.0)) throw FormatError("normalization std must be > 0 for every band");
  }
}

}  // namespace wastesite::data
