#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/dataengine/spectrogram.hpp"
#include "wastesite/models/architectures.hpp"
#include "wastesite/nn/tensor.hpp"

namespace wastesite::models {

/// (N, 2, 12, 1) batch of normalized spectrograms.
inline nn::Tensor<float> spectrogram_batch(std::span<const data::Spectrogram> xs) {
  nn::Tensor<float> t({xs.size(), kTimeSteps, kBands, 1});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i].normalized) throw DataError("pixel classifier input must be normalized");
    std::copy(xs[i].values.begin(), xs[i].values.end(), t.data() + i * data::kSpectrogramSize);
  }
  return t;
}

/// (N, 28, 28, 24) batch; with `augment`, each patch contributes its 8 dihedral images
/// consecutively.
inline nn::Tensor<float> patch_batch(std::span<const data::PatchTensor> ps, bool augment = false);

/// Targets matching `patch_batch`, one per (possibly augmented) row.
inline nn::Tensor<float> patch_targets(std::span<const data::PatchTensor> ps, bool augment = false) {
  const std::size_t copies = augment ? 8 : 1;
  nn::Tensor<float> t({ps.size() * copies, 1});
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].label.is_target()) throw DataError("patch " + ps[i].id + " has no training target");
    for (std::size_t k = 0; k < copies; ++k) t[i * copies + k] = ps[i].label.p;
  }
  return t;
}

/// Element k of the dihedral group on a square HWC patch: optional horizontal reflection
/// (k >= 4) followed by k % 4 clockwise quarter turns.
inline void dihedral(std::span<const float> src, std::span<float> dst, int k,
                     std::size_t side = kPatchSize, std::size_t channels = kPatchChannels) {
  if (src.size() != side * side * channels || dst.size() != src.size())
    throw ShapeError("dihedral transform needs a square patch");
  const bool flip = k >= 4;
  const int turns = k % 4;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      std::size_t ty = y;
      std::size_t tx = flip ? side - 1 - x : x;
      for (int r = 0; r < turns; ++r) {
        const std::size_t ny = tx;
        const std::size_t nx = side - 1 - ty;
        ty = ny;
        tx = nx;
      }
      std::copy_n(src.data() + (y * side + x) * channels, channels,
                  dst.data() + (ty * side + tx) * channels);
    }
  }
}

inline nn::Tensor<float> patch_batch(std::span<const data::PatchTensor> ps, bool augment) {
  const std::size_t copies = augment ? 8 : 1;
  nn::Tensor<float> t({ps.size() * copies, kPatchSize, kPatchSize, kPatchChannels});
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].values.size() != data::kPatchValues) {
      throw ShapeError("patch " + ps[i].id + " holds " + std::to_string(ps[i].values.size()) +
                       " values, expected 28x28x24");
    }
    for (std::size_t k = 0; k < copies; ++k) {
      std::span<float> dst(t.data() + (i * copies + k) * data::kPatchValues, data::kPatchValues);
      dihedral(ps[i].values, dst, static_cast<int>(k));
    }
  }
  return t;
}

}  // namespace wastesite::models
