#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/parallel.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/models/architectures.hpp"
#include "wastesite/models/inputs.hpp"
#include "wastesite/nn/train.hpp"

namespace wastesite::models {

inline constexpr std::size_t kEnsembleSize = 32;

using VoteVector = std::array<float, kEnsembleSize>;

struct MemberMetrics {
  std::uint64_t seed = 0;
  std::vector<double> loss;
  /// Infer-mode accuracy on the un-augmented training patches.
  double train_accuracy = 0.0;
};

struct EnsembleConfig {
  nn::TrainConfig train;
  bool augment = true;
  PatchWidths widths;
  /// Member i is seeded with seed_base + i.
  std::uint64_t seed_base = 0;
  std::size_t workers = 1;
  /// Called after each member finishes; may run on a worker thread.
  std::function<void(std::size_t member, const MemberMetrics&)> on_member;
};

struct TeacherEnsemble {
  std::vector<PatchClassifier> members;
  std::vector<MemberMetrics> metrics;

  std::vector<std::uint64_t> seeds() const {
    std::vector<std::uint64_t> s;
    for (const auto& m : members) s.push_back(m.seed());
    return s;
  }

  /// One vote vector per patch; each member runs one forward pass per patch.
  std::vector<VoteVector> votes(const nn::Tensor<float>& batch) const {
    if (members.size() != kEnsembleSize) throw DataError("ensemble must hold exactly 32 members");
    std::vector<VoteVector> out(batch.dim(0));
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto y = nn::predict(members[m], batch, 64);
      for (std::size_t i = 0; i < out.size(); ++i) out[i][m] = y[i];
    }
    return out;
  }
};

/// Trains 32 patch classifiers on identical data and hyperparameters with seeds
/// seed_base .. seed_base + 31. Members are independent, so results do not depend on
/// the worker count.
inline TeacherEnsemble train_teacher_ensemble(std::span<const data::PatchTensor> patches,
                                              const EnsembleConfig& cfg) {
  if (patches.empty()) throw DataError("teacher training needs labeled patches");
  std::size_t pos = 0, neg = 0;
  for (const auto& p : patches) {
    if (p.label.kind == data::PatchClass::positive) ++pos;
    else if (p.label.kind == data::PatchClass::negative) ++neg;
    else throw DataError("teacher training takes hard labels only; patch " + p.id + " is not");
  }
  if (pos == 0 || neg == 0) {
    throw DataError(std::string("teacher training needs both classes; got only ") +
                    (pos ? "positive" : "negative") + " patches");
  }
  cfg.train.validate();
  const nn::Tensor<float> x = patch_batch(patches, cfg.augment);
  const nn::Tensor<float> t = patch_targets(patches, cfg.augment);
  const nn::Tensor<float> x_plain = cfg.augment ? patch_batch(patches, false) : x;
  const nn::Tensor<float> t_plain = cfg.augment ? patch_targets(patches, false) : t;

  TeacherEnsemble ens;
  ens.members.reserve(kEnsembleSize);
  for (std::size_t m = 0; m < kEnsembleSize; ++m) ens.members.push_back(make_patch_classifier(cfg.seed_base + m, cfg.widths));
  ens.metrics.resize(kEnsembleSize);
  parallel_for(kEnsembleSize, cfg.workers, [&](std::size_t m) {
    nn::TrainConfig tc = cfg.train;
    tc.shuffle_seed = cfg.train.shuffle_seed + m;
    tc.on_epoch = nullptr;
    const auto history = nn::train(ens.members[m], x, t, tc);
    ens.metrics[m].seed = ens.members[m].seed();
    ens.metrics[m].loss = history.loss;
    ens.metrics[m].train_accuracy = nn::accuracy(ens.members[m], x_plain, t_plain);
    if (cfg.on_member) cfg.on_member(m, ens.metrics[m]);
  });
  return ens;
}

}  // namespace wastesite::models
