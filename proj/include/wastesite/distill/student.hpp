#pragma once

#include <optional>
#include <span>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/metrics.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/distill/fusion.hpp"
#include "wastesite/models/architectures.hpp"
#include "wastesite/models/ensemble.hpp"
#include "wastesite/models/inputs.hpp"
#include "wastesite/nn/train.hpp"

namespace wastesite::distill {

struct StudentConfig {
  nn::TrainConfig train;
  models::PatchWidths widths;
  std::uint64_t seed = 0;
  bool augment = true;
};

struct StudentResult {
  models::PatchClassifier net;
  nn::TrainHistory history;
  std::optional<ClassMetrics> holdout;
};

/// Counts forward passes needed to score one patch.
inline std::size_t forward_passes(const models::PatchClassifier&) { return 1; }
inline std::size_t forward_passes(const models::TeacherEnsemble& e) { return e.members.size(); }

inline ClassMetrics evaluate(const models::PatchClassifier& net, std::span<const data::PatchTensor> ps) {
  const auto y = nn::predict(net, models::patch_batch(ps), 64);
  ClassMetrics m;
  for (std::size_t i = 0; i < ps.size(); ++i) m.add(y[i] >= 0.5f, ps[i].label.p >= 0.5f);
  return m;
}

/// Ensemble decision: majority of binarised member votes.
inline ClassMetrics evaluate(const models::TeacherEnsemble& ens, std::span<const data::PatchTensor> ps) {
  ClassMetrics m;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < ps.size(); start += kChunk) {
    const auto part = ps.subspan(start, std::min(kChunk, ps.size() - start));
    const auto votes = ens.votes(models::patch_batch(part));
    for (std::size_t i = 0; i < part.size(); ++i) m.add(ensemble_positive(votes[i]), part[i].label.p >= 0.5f);
  }
  return m;
}

/// Trains one patch network on the pooled hard- and soft-labelled patches with uniform
/// sample weighting; BCE against the soft probabilities.
inline StudentResult train_student(std::span<const data::PatchTensor> hard,
                                   std::span<const data::PatchTensor> soft, const StudentConfig& cfg,
                                   std::span<const data::PatchTensor> holdout = {}) {
  if (hard.empty()) throw DataError("student training needs human-labeled (hard) patches");
  std::vector<data::PatchTensor> pooled(hard.begin(), hard.end());
  for (const auto& p : hard) {
    if (p.label.kind != data::PatchClass::positive && p.label.kind != data::PatchClass::negative)
      throw DataError("hard-label set holds non-hard patch " + p.id);
  }
  for (const auto& p : soft) {
    if (!p.label.is_target()) throw DataError("soft-label set holds unlabeled patch " + p.id);
    pooled.push_back(p);
  }
  StudentResult r{models::make_patch_classifier(cfg.seed, cfg.widths), {}, std::nullopt};
  r.history = nn::train(r.net, models::patch_batch(pooled, cfg.augment), models::patch_targets(pooled, cfg.augment), cfg.train);
  if (!holdout.empty()) r.holdout = evaluate(r.net, holdout);
  return r;
}

}  // namespace wastesite::distill
