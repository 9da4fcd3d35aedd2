#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/parallel.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/distill/fusion.hpp"
#include "wastesite/models/architectures.hpp"
#include "wastesite/models/ensemble.hpp"
#include "wastesite/models/inputs.hpp"
#include "wastesite/models/svm.hpp"

namespace wastesite::distill {

inline constexpr double kHoldoutFraction = 0.2;
inline constexpr std::size_t kPatchPixels = data::kPatchSize * data::kPatchSize;

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

/// Per-class seeded split; each class with at least two members keeps one on each side.
inline Split stratified_split(std::span<const data::PatchTensor> ps, double fraction = kHoldoutFraction,
                              std::uint64_t seed = 0) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("distill.holdout_fraction", "must lie in (0, 1)");
  std::vector<std::size_t> cls[2];
  for (std::size_t i = 0; i < ps.size(); ++i) cls[ps[i].label.p >= 0.5f ? 1 : 0].push_back(i);
  Split s;
  for (int c = 0; c < 2; ++c) {
    auto& idx = cls[c];
    CounterRng rng(seed, static_cast<std::uint64_t>(c) + 1);
    rng.shuffle(std::span<std::size_t>(idx));
    std::size_t k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    s.holdout.insert(s.holdout.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, idx.size())));
    s.train.insert(s.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, idx.size())), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  return s;
}

template <class T>
std::vector<T> pick(std::span<const T> xs, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(xs[i]);
  return out;
}

/// Pixel-classifier score for each of the patch's 784 pixels; invalid pixels score 0.
inline std::vector<float> pixel_patch_scores(const models::PixelClassifier& net, const data::PatchTensor& p) {
  if (p.values.size() != data::kPatchValues) throw ShapeError("patch " + p.id + " is not 28x28x24");
  nn::Tensor<float> x({kPatchPixels, models::kTimeSteps, models::kBands, 1}, p.values);
  const auto y = nn::predict(net, x, kPatchPixels);
  std::vector<float> out(y.values().begin(), y.values().end());
  if (!p.valid.empty()) {
    for (std::size_t i = 0; i < kPatchPixels; ++i)
      if (!p.valid[i]) out[i] = 0.0f;
  }
  return out;
}

inline std::vector<int> pixel_votes(const models::PixelClassifier& net, std::span<const data::PatchTensor> ps) {
  std::vector<int> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(pixel_aggregate_label(pixel_patch_scores(net, p)));
  return out;
}

/// Decision values of the SVM on flattened patches.
inline std::vector<double> svm_decisions(const models::RbfSvm& svm, std::span<const data::PatchTensor> ps) {
  if (svm.dim != data::kPatchValues) {
    throw ShapeError("svm expects " + std::to_string(svm.dim) + " inputs, patches flatten to " +
                     std::to_string(data::kPatchValues));
  }
  std::vector<double> out;
  out.reserve(ps.size());
  constexpr std::size_t kChunk = 32;
  std::vector<float> flat;
  for (std::size_t start = 0; start < ps.size(); start += kChunk) {
    const std::size_t stop = std::min(ps.size(), start + kChunk);
    flat.clear();
    for (std::size_t i = start; i < stop; ++i) flat.insert(flat.end(), ps[i].values.begin(), ps[i].values.end());
    const auto d = svm.decision(flat);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

inline std::vector<int> svm_votes(const models::RbfSvm& svm, std::span<const data::PatchTensor> ps) {
  std::vector<int> out;
  for (double d : svm_decisions(svm, ps)) out.push_back(d > 0.0 ? 1 : 0);
  return out;
}

/// Flattened patches and +1/-1 labels for SVM training.
inline std::pair<std::vector<float>, std::vector<float>> svm_training_set(std::span<const data::PatchTensor> ps) {
  std::vector<float> xs, ys;
  xs.reserve(ps.size() * data::kPatchValues);
  for (const auto& p : ps) {
    if (p.values.size() != data::kPatchValues) throw ShapeError("patch " + p.id + " is not 28x28x24");
    xs.insert(xs.end(), p.values.begin(), p.values.end());
    ys.push_back(p.label.p >= 0.5f ? 1.0f : -1.0f);
  }
  return {std::move(xs), std::move(ys)};
}

inline std::vector<int> hard_truth(std::span<const data::PatchTensor> ps) {
  std::vector<int> t;
  for (const auto& p : ps) t.push_back(p.label.p >= 0.5f ? 1 : 0);
  return t;
}

struct FusionModels {
  const models::TeacherEnsemble& ensemble;
  const models::RbfSvm& svm;
  const models::PixelClassifier& pixel;
  ModelStats svm_stats;
  ModelStats pixel_stats;
};

/// One soft target per unlabeled patch: the fused ensemble value (clamped into
/// [eps, 1-eps]) is the prior, updated by the SVM vote and the pixel-aggregate vote.
inline std::vector<SoftTarget> build_soft_targets(std::span<const data::PatchTensor> patches,
                                                  const FusionModels& m, std::size_t workers = 1) {
  for (const auto& p : patches) {
    if (p.values.size() != data::kPatchValues) throw ShapeError("patch " + p.id + " is not 28x28x24");
    if (!p.normalized) throw DataError("patch " + p.id + " is not normalized with the models' statistics");
  }
  if (m.svm.dim != data::kPatchValues) throw ShapeError("svm dimension " + std::to_string(m.svm.dim) + " does not match a flattened patch");
  std::vector<SoftTarget> out(patches.size());
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (patches.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t start = c * kChunk;
    const auto part = patches.subspan(start, std::min(kChunk, patches.size() - start));
    const auto votes = m.ensemble.votes(models::patch_batch(part));
    const auto svm = svm_votes(m.svm, part);
    for (std::size_t i = 0; i < part.size(); ++i) {
      SoftTarget& t = out[start + i];
      t.patch_id = part[i].id;
      t.ensemble_value = fuse_ensemble(votes[i]);
      t.svm_vote = svm[i];
      t.pixel_vote = pixel_aggregate_label(pixel_patch_scores(m.pixel, part[i]));
      const Vote evidence[2] = {{t.svm_vote == 1, m.svm_stats}, {t.pixel_vote == 1, m.pixel_stats}};
      t.soft_p = bayes_fuse(clamp_probability(t.ensemble_value), evidence);
    }
  });
  return out;
}

/// Copies `patches` with each one's soft target attached as its label, matched by id.
inline std::vector<data::PatchTensor> attach_soft_targets(std::span<const data::PatchTensor> patches,
                                                          std::span<const SoftTarget> targets) {
  std::unordered_map<std::string, double> by_id;
  for (const auto& t : targets) by_id[t.patch_id] = t.soft_p;
  std::vector<data::PatchTensor> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    const auto it = by_id.find(p.id);
    if (it == by_id.end()) throw DataError("no soft target for patch " + p.id);
    out.push_back(p);
    out.back().label = data::PatchLabel::soft(static_cast<float>(it->second));
  }
  return out;
}

}  // namespace wastesite::distill
