#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wastesite/detect/candidate.hpp"
#include "wastesite/detect/patch_grid.hpp"

namespace wastesite::detect {

struct CrossValidation {
  std::vector<CandidateSite> kept;
  /// Covered, but no covering patch beat the threshold.
  std::vector<CandidateSite> dropped;
  /// Centre outside every patch; never kept.
  std::vector<CandidateSite> uncovered;
  std::vector<std::string> report;
};

/// Keeps a candidate iff some patch whose 28-px extent holds the candidate's centre pixel
/// scores above the mode's patch threshold; the best covering score is recorded either way.
inline CrossValidation cross_validate(const std::vector<CandidateSite>& cands, const PatchScoreGrid& grid,
                                      const SensitivityMode& mode) {
  CrossValidation cv;
  for (auto c : cands) {
    const auto cells = grid.covering(c.pixel.x, c.pixel.y);
    if (cells.empty()) {
      cv.report.push_back("candidate " + c.id + " at pixel (" + std::to_string(c.pixel.x) + ", " +
                          std::to_string(c.pixel.y) + ") lies outside the patch grid");
      cv.uncovered.push_back(std::move(c));
      continue;
    }
    float best = 0.0f;
    for (const auto& [col, row] : cells) best = std::max(best, grid.at(col, row));
    c.patch_score = best;
    (best > static_cast<float>(mode.patch_threshold) ? cv.kept : cv.dropped).push_back(std::move(c));
  }
  return cv;
}

}  // namespace wastesite::detect
