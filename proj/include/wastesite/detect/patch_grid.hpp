#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/parallel.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/models/architectures.hpp"
#include "wastesite/models/inputs.hpp"

namespace wastesite::detect {

inline constexpr std::size_t kPatchStride = 8;
inline constexpr std::size_t kPatchExtent = data::kPatchSize;

/// Patch scores on a stride-8 lattice; cell (c, r) covers pixels
/// [8c, 8c + 28) x [8r, 8r + 28) of the field.
struct PatchScoreGrid {
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t stride = kPatchStride;
  std::size_t extent = kPatchExtent;
  std::size_t field_width = 0;
  std::size_t field_height = 0;
  std::vector<float> scores;

  float at(std::size_t c, std::size_t r) const { return scores[r * cols + c]; }
  std::size_t x_of(std::size_t c) const noexcept { return c * stride; }
  std::size_t y_of(std::size_t r) const noexcept { return r * stride; }

  /// Cells whose extent contains pixel (px, py); empty when the pixel is outside coverage.
  std::vector<std::pair<std::size_t, std::size_t>> covering(double px, double py) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (!(px >= 0.0 && py >= 0.0)) return out;
    const auto ix = static_cast<std::size_t>(std::floor(px));
    const auto iy = static_cast<std::size_t>(std::floor(py));
    auto span = [&](std::size_t p, std::size_t n) {
      // cells k with k*stride <= p < k*stride + extent
      const std::size_t hi = std::min(p / stride, n ? n - 1 : 0);
      const std::size_t lo = p + 1 > extent ? (p + 1 - extent + stride - 1) / stride : 0;
      return std::pair{lo, hi};
    };
    if (cols == 0 || rows == 0) return out;
    const auto [c0, c1] = span(ix, cols);
    const auto [r0, r1] = span(iy, rows);
    for (std::size_t r = r0; r <= r1 && r < rows; ++r)
      for (std::size_t c = c0; c <= c1 && c < cols; ++c)
        if (x_of(c) <= ix && ix < x_of(c) + extent && y_of(r) <= iy && iy < y_of(r) + extent) out.emplace_back(c, r);
    return out;
  }
};

inline std::size_t lattice_count(std::size_t side) {
  return side < kPatchExtent ? 0 : (side - kPatchExtent) / kPatchStride + 1;
}

/// Patches are scored in chunks of this many cells in row-major order; the last chunk is
/// zero-padded so every forward pass has the same batch shape.
inline constexpr std::size_t kGridChunk = 8;

inline PatchScoreGrid infer_patch_grid(const models::PatchClassifier& net, const data::SpectrogramField& field,
                                       std::size_t workers = 1) {
  const nn::Shape want{kPatchExtent, kPatchExtent, models::kPatchChannels};
  if (net.input_shape() != want)
    throw ShapeError("patch model takes " + nn::to_string(net.input_shape()) + ", patches are " + nn::to_string(want));
  if (field.width < kPatchExtent || field.height < kPatchExtent) {
    throw ShapeError("scene " + std::to_string(field.width) + "x" + std::to_string(field.height) +
                     " is smaller than one 28x28 patch");
  }
  if (!field.normalized) throw DataError("patch grid inference needs a normalized field");
  PatchScoreGrid g;
  g.cols = lattice_count(field.width);
  g.rows = lattice_count(field.height);
  g.field_width = field.width;
  g.field_height = field.height;
  g.scores.assign(g.cols * g.rows, 0.0f);
  const std::size_t cells = g.scores.size();
  const std::size_t chunks = (cells + kGridChunk - 1) / kGridChunk;
  parallel_for(chunks, workers, [&](std::size_t k) {
    nn::Tensor<float> batch({kGridChunk, kPatchExtent, kPatchExtent, models::kPatchChannels});
    const std::size_t first = k * kGridChunk;
    const std::size_t n = std::min(kGridChunk, cells - first);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cell = first + i;
      const auto p = data::extract_patch(field, g.x_of(cell % g.cols), g.y_of(cell / g.cols));
      std::copy(p.values.begin(), p.values.end(), batch.data() + i * data::kPatchValues);
    }
    const auto y = net.infer(batch);
    for (std::size_t i = 0; i < n; ++i) g.scores[first + i] = std::clamp(y[i], 0.0f, 1.0f);
  });
  return g;
}

inline void to_json(nlohmann::json& j, const PatchScoreGrid& g) {
  j = {{"cols", g.cols}, {"rows", g.rows}, {"stride", g.stride}, {"extent", g.extent},
       {"field_width", g.field_width}, {"field_height", g.field_height}, {"scores", g.scores}};
}
inline void from_json(const nlohmann::json& j, PatchScoreGrid& g) {
  j.at("cols").get_to(g.cols);
  j.at("rows").get_to(g.rows);
  j.at("stride").get_to(g.stride);
  j.at("extent").get_to(g.extent);
  j.at("field_width").get_to(g.field_width);
  j.at("field_height").get_to(g.field_height);
  j.at("scores").get_to(g.scores);
  if (g.stride != kPatchStride || g.extent != kPatchExtent) throw FormatError("patch grid must use stride 8 and extent 28");
  if (g.scores.size() != g.cols * g.rows) throw FormatError("patch grid score count does not match its lattice");
}

}  // namespace wastesite::detect
