#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/parallel.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/spectrogram.hpp"
#include "wastesite/models/architectures.hpp"

namespace wastesite::detect {

/// Per-pixel waste probability. (x0, y0) is the top-left pixel in the enclosing scene.
struct Heatmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> scores;
  std::vector<std::uint8_t> valid;
  std::size_t x0 = 0;
  std::size_t y0 = 0;

  Heatmap() = default;
  Heatmap(std::size_t w, std::size_t h) : width(w), height(h), scores(w * h, 0.0f), valid(w * h, 0) {}

  std::size_t pixels() const noexcept { return width * height; }
  float at(std::size_t x, std::size_t y) const { return scores[y * width + x]; }
  bool same_size(const Heatmap& o) const noexcept { return width == o.width && height == o.height; }
  bool operator==(const Heatmap&) const = default;
};

/// Pixels are scored in groups of this many, keyed by global column: pixel x always sits
/// in slot x % kHeatmapGroup of an identically shaped batch, whatever the tiling. GEMM
/// kernels pick different code paths for different batch sizes, so fixing the batch shape
/// is what makes tile-boundary pixels score bit-identically.
inline constexpr std::size_t kHeatmapGroup = 64;

inline void check_pixel_model(const models::PixelClassifier& net) {
  const nn::Shape want{models::kTimeSteps, models::kBands, 1};
  if (net.input_shape() != want) {
    throw ShapeError("pixel model takes " + nn::to_string(net.input_shape()) + ", spectrograms are " +
                     nn::to_string(want));
  }
  if (nn::element_count(net.output_shape()) != 1) throw ShapeError("pixel model must emit one score per pixel");
}

/// Scores every valid pixel of a normalized field whose top-left pixel sits at
/// (origin_x, origin_y) in the scene. Invalid pixels score 0.
inline Heatmap infer_heatmap(const models::PixelClassifier& net, const data::SpectrogramField& field,
                             std::size_t origin_x = 0, std::size_t origin_y = 0) {
  check_pixel_model(net);
  if (!field.normalized) throw DataError("heatmap inference needs a field normalized with the model's statistics");
  if (field.values.size() != field.pixels() * data::kSpectrogramSize || field.valid.size() != field.pixels())
    throw ShapeError("spectrogram field planes do not match its " + std::to_string(field.width) + "x" +
                     std::to_string(field.height) + " size");
  Heatmap h(field.width, field.height);
  h.x0 = origin_x;
  h.y0 = origin_y;
  constexpr std::size_t G = kHeatmapGroup;
  constexpr std::size_t S = data::kSpectrogramSize;
  nn::Tensor<float> batch({G, models::kTimeSteps, models::kBands, 1});
  const std::size_t first_group = origin_x / G;
  const std::size_t last_group = (origin_x + field.width + G - 1) / G;
  for (std::size_t y = 0; y < field.height; ++y) {
    for (std::size_t g = first_group; g < last_group; ++g) {
      std::fill(batch.storage().begin(), batch.storage().end(), 0.0f);
      bool any = false;
      for (std::size_t s = 0; s < G; ++s) {
        const std::size_t gx = g * G + s;
        if (gx < origin_x || gx >= origin_x + field.width) continue;
        const std::size_t lx = gx - origin_x;
        if (!field.valid[y * field.width + lx]) continue;
        const auto px = field.pixel(lx, y);
        std::copy(px.begin(), px.end(), batch.data() + s * S);
        any = true;
      }
      if (!any) continue;
      const auto out = net.infer(batch);
      for (std::size_t s = 0; s < G; ++s) {
        const std::size_t gx = g * G + s;
        if (gx < origin_x || gx >= origin_x + field.width) continue;
        const std::size_t i = y * field.width + (gx - origin_x);
        if (!field.valid[i]) continue;
        h.scores[i] = std::clamp(out[s], 0.0f, 1.0f);
        h.valid[i] = 1;
      }
    }
  }
  return h;
}

/// Splits the field into tiles_x by tiles_y near-equal tiles, scores them on `workers`
/// threads and stitches the result by tile index.
inline Heatmap infer_heatmap_tiled(const models::PixelClassifier& net, const data::SpectrogramField& field,
                                   std::size_t tiles_x, std::size_t tiles_y, std::size_t workers = 1) {
  if (tiles_x == 0 || tiles_y == 0) throw ConfigError("detect.tiles", "tile counts must be >= 1");
  tiles_x = std::min(tiles_x, std::max<std::size_t>(field.width, 1));
  tiles_y = std::min(tiles_y, std::max<std::size_t>(field.height, 1));
  auto cut = [](std::size_t n, std::size_t parts, std::size_t k) { return n * k / parts; };
  std::vector<Heatmap> tiles(tiles_x * tiles_y);
  parallel_for(tiles.size(), workers, [&](std::size_t t) {
    const std::size_t tx = t % tiles_x, ty = t / tiles_x;
    const std::size_t x0 = cut(field.width, tiles_x, tx), x1 = cut(field.width, tiles_x, tx + 1);
    const std::size_t y0 = cut(field.height, tiles_y, ty), y1 = cut(field.height, tiles_y, ty + 1);
    tiles[t] = infer_heatmap(net, field.crop(x0, y0, x1 - x0, y1 - y0), x0, y0);
  });
  Heatmap h(field.width, field.height);
  for (const auto& tile : tiles) {
    for (std::size_t y = 0; y < tile.height; ++y) {
      const std::size_t dst = (tile.y0 + y) * h.width + tile.x0;
      std::copy_n(tile.scores.data() + y * tile.width, tile.width, h.scores.data() + dst);
      std::copy_n(tile.valid.data() + y * tile.width, tile.width, h.valid.data() + dst);
    }
  }
  return h;
}

/// Masked mean over timesteps; a pixel never valid stays invalid at 0. Values are summed
/// in sorted order so the result does not depend on the order of the list.
inline Heatmap average_timesteps(std::span<const Heatmap> steps) {
  if (steps.empty()) throw DataError("cannot average an empty list of heatmaps");
  for (const auto& s : steps) {
    if (!s.same_size(steps.front()))
      throw ShapeError("heatmaps to average differ in size: " + std::to_string(s.width) + "x" +
                       std::to_string(s.height) + " vs " + std::to_string(steps.front().width) + "x" +
                       std::to_string(steps.front().height));
  }
  Heatmap out(steps.front().width, steps.front().height);
  out.x0 = steps.front().x0;
  out.y0 = steps.front().y0;
  std::vector<float> vals;
  for (std::size_t i = 0; i < out.pixels(); ++i) {
    vals.clear();
    for (const auto& s : steps)
      if (s.valid[i]) vals.push_back(s.scores[i]);
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    double sum = 0.0;
    for (float v : vals) sum += v;
    out.scores[i] = static_cast<float>(sum / static_cast<double>(vals.size()));
    out.valid[i] = 1;
  }
  return out;
}

inline data::RasterFile heatmap_to_raster(const Heatmap& h, const GeoTransform& geo) {
  data::RasterFile r;
  r.width = h.width;
  r.height = h.height;
  r.planes.emplace_back("score", h.scores);
  r.planes.emplace_back("valid", data::to_floats(h.valid));
  r.meta = {{"kind", "heatmap"}, {"geotransform", geo}, {"x0", h.x0}, {"y0", h.y0}};
  return r;
}

inline Heatmap raster_to_heatmap(const data::RasterFile& r) {
  Heatmap h;
  h.width = r.width;
  h.height = r.height;
  h.scores = r.plane("score");
  h.valid = data::to_flags(r.plane("valid"));
  h.x0 = r.meta.value("x0", std::size_t{0});
  h.y0 = r.meta.value("y0", std::size_t{0});
  return h;
}

inline void write_heatmap(const std::filesystem::path& base, const Heatmap& h, const GeoTransform& geo) {
  data::write_raster(base, heatmap_to_raster(h, geo));
}
inline Heatmap read_heatmap(const std::filesystem::path& base) { return raster_to_heatmap(data::read_raster(base)); }

}  // namespace wastesite::detect
