#pragma once

#include <cstdint>

#include "wastesite/nn/network.hpp"

namespace wastesite::models {

inline constexpr std::size_t kBands = 12;
inline constexpr std::size_t kTimeSteps = 2;
inline constexpr std::size_t kPatchSize = 28;
inline constexpr std::size_t kPatchChannels = kTimeSteps * kBands;

/// Spectrogram classifier on (2, 12, 1) input: a band-axis convolution shared by both
/// time rows, a time-axis convolution that differences the two spectra, then a small
/// dense head. Roughly 13k parameters.
inline nn::NetworkSpec pixel_classifier_spec() {
  using nn::LayerSpec;
  return {{kTimeSteps, kBands, 1},
          {LayerSpec::conv2d("band_conv", 1, 3, 1, 16), LayerSpec::relu("band_relu"),
           LayerSpec::conv2d("time_conv", 2, 1, 16, 16), LayerSpec::relu("time_relu"),
           LayerSpec::flatten("flatten"), LayerSpec::dense("dense_64", 160, 64),
           LayerSpec::relu("dense_64_relu"), LayerSpec::dropout("dropout", 0.3),
           LayerSpec::dense("dense_32", 64, 32), LayerSpec::relu("dense_32_relu"),
           LayerSpec::dense("logit", 32, 1), LayerSpec::sigmoid("probability")}};
}

struct PatchWidths {
  std::size_t conv[3] = {32, 64, 128};
  std::size_t dense[2] = {128, 64};
  double dropout = 0.4;
};

/// Patch classifier on (28, 28, 24): three rounds of three 3x3 conv+batchnorm+relu layers
/// each closed by 2x2 max pooling, then two dense blocks (dense, batchnorm, relu, dropout).
/// Layers feeding a batchnorm carry no bias; the normalisation would subtract it.
inline nn::NetworkSpec patch_classifier_spec(const PatchWidths& w = {}) {
  using nn::LayerSpec;
  nn::NetworkSpec spec{{kPatchSize, kPatchSize, kPatchChannels}, {}};
  std::size_t channels = kPatchChannels;
  std::size_t side = kPatchSize;
  for (int round = 0; round < 3; ++round) {
    for (int k = 0; k < 3; ++k) {
      const std::string tag = "conv" + std::to_string(round + 1) + "_" + std::to_string(k + 1);
      spec.layers.push_back(LayerSpec::conv2d(tag, 3, 3, channels, w.conv[round], nn::Padding::same, false));
      spec.layers.push_back(LayerSpec::batchnorm(tag + "_bn", w.conv[round]));
      spec.layers.push_back(LayerSpec::relu(tag + "_relu"));
      channels = w.conv[round];
    }
    spec.layers.push_back(LayerSpec::maxpool("pool" + std::to_string(round + 1), 2));
    side /= 2;
  }
  spec.layers.push_back(LayerSpec::flatten("flatten"));
  std::size_t units = side * side * channels;
  for (int b = 0; b < 2; ++b) {
    const std::string tag = "dense" + std::to_string(b + 1);
    spec.layers.push_back(LayerSpec::dense(tag, units, w.dense[b], false));
    spec.layers.push_back(LayerSpec::batchnorm(tag + "_bn", w.dense[b]));
    spec.layers.push_back(LayerSpec::relu(tag + "_relu"));
    spec.layers.push_back(LayerSpec::dropout(tag + "_dropout", w.dropout));
    units = w.dense[b];
  }
  spec.layers.push_back(LayerSpec::dense("logit", units, 1));
  spec.layers.push_back(LayerSpec::sigmoid("probability"));
  return spec;
}

using PixelClassifier = nn::Network<float>;
using PatchClassifier = nn::Network<float>;

inline PixelClassifier make_pixel_classifier(std::uint64_t seed) {
  return PixelClassifier(pixel_classifier_spec(), seed);
}

inline PatchClassifier make_patch_classifier(std::uint64_t seed, const PatchWidths& w = {}) {
  return PatchClassifier(patch_classifier_spec(w), seed);
}

}  // namespace wastesite::models
