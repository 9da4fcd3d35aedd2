#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "json.hpp"
#include "wastesite/core/error.hpp"

namespace wastesite {

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(bool predicted, bool actual) noexcept {
    if (predicted) actual ? ++tp : ++fp;
    else actual ? ++fn : ++tn;
  }
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  double precision() const noexcept { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
  double recall() const noexcept { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
  double f1() const noexcept {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  double accuracy() const noexcept { return total() ? double(tp + tn) / double(total()) : 0.0; }
  double tpr() const noexcept { return recall(); }
  double fpr() const noexcept { return fp + tn ? double(fp) / double(fp + tn) : 0.0; }
};

/// Thresholds `scores` (>= threshold is positive) against targets (>= 0.5 is positive).
inline ClassMetrics binary_metrics(std::span<const float> scores, std::span<const float> truth,
                                   double threshold = 0.5) {
  if (scores.size() != truth.size()) throw ShapeError("metrics need one target per score");
  ClassMetrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) m.add(scores[i] >= threshold, truth[i] >= 0.5f);
  return m;
}

inline void to_json(nlohmann::json& j, const ClassMetrics& m) {
  j = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn},
       {"precision", m.precision()}, {"recall", m.recall()}, {"f1", m.f1()}, {"accuracy", m.accuracy()}};
}

}  // namespace wastesite
