#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/models/ensemble.hpp"

namespace wastesite::distill {

inline constexpr double kEpsilon = 1e-3;
inline constexpr double kPixelMeanThreshold = 0.02;

inline double clamp_probability(double p, double eps = kEpsilon) {
  return std::clamp(p, eps, 1.0 - eps);
}

/// Binarises the votes at 0.5, takes the mode m (a tie counts as 0) and scales it by
/// 1 - 2 sigma, sigma being the population std of the binary votes.
inline double fuse_ensemble(const models::VoteVector& votes) {
  std::size_t positive = 0;
  for (float v : votes) positive += v >= 0.5f;
  const double n = static_cast<double>(votes.size());
  const double q = static_cast<double>(positive) / n;
  const double sigma = std::sqrt(q * (1.0 - q));
  const int mode = 2 * positive > votes.size() ? 1 : 0;
  return mode * (1.0 - 2.0 * sigma);
}

/// Majority decision of the ensemble (ties negative).
inline bool ensemble_positive(const models::VoteVector& votes) { return fuse_ensemble(votes) > 0.0; }

/// 1 iff the mean pixel score strictly exceeds 0.02.
inline int pixel_aggregate_label(std::span<const float> scores, double threshold = kPixelMeanThreshold) {
  if (scores.empty()) throw DataError("pixel aggregate of an empty patch");
  double sum = 0.0;
  for (float s : scores) sum += s;
  return sum / static_cast<double>(scores.size()) > threshold ? 1 : 0;
}

/// True/false-positive rates of one model on held-out labels, kept inside (eps, 1 - eps).
struct ModelStats {
  double tpr = 0.5;
  double fpr = 0.5;

  static ModelStats clamped(double tpr, double fpr) {
    return {clamp_probability(tpr), clamp_probability(fpr)};
  }

  /// From binary predictions and labels; both classes must be present.
  static ModelStats measure(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw ShapeError("model stats need one label per prediction");
    double tp = 0, fp = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i]) {
        ++pos;
        tp += predicted[i] != 0;
      } else {
        ++neg;
        fp += predicted[i] != 0;
      }
    }
    if (pos == 0 || neg == 0) throw DataError("held-out split must contain both classes to measure TPR/FPR");
    return clamped(tp / pos, fp / neg);
  }

  bool operator==(const ModelStats&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelStats& s) { j = {{"tpr", s.tpr}, {"fpr", s.fpr}}; }
inline void from_json(const nlohmann::json& j, ModelStats& s) {
  s = ModelStats::clamped(j.at("tpr").get<double>(), j.at("fpr").get<double>());
}

struct Vote {
  bool positive = false;
  ModelStats stats;
};

/// Odds-ratio update: positive votes multiply the odds by TPR/FPR, negative ones by
/// (1-TPR)/(1-FPR). Accumulated in log space and summed in sorted order, so the result
/// does not depend on vote order.
inline double bayes_fuse(double prior, std::span<const Vote> votes) {
  if (!(prior > 0.0 && prior < 1.0)) throw DataError("prior must lie strictly inside (0, 1)");
  std::vector<double> terms;
  terms.reserve(votes.size());
  for (const auto& v : votes) {
    const double tpr = clamp_probability(v.stats.tpr);
    const double fpr = clamp_probability(v.stats.fpr);
    terms.push_back(v.positive ? std::log(tpr) - std::log(fpr) : std::log1p(-tpr) - std::log1p(-fpr));
  }
  std::sort(terms.begin(), terms.end());
  double log_odds = std::log(prior) - std::log1p(-prior);
  for (double t : terms) log_odds += t;
  return 1.0 / (1.0 + std::exp(-log_odds));
}

/// Smallest soft target reachable when every vote is negative, from the clamped prior floor.
inline double soft_target_floor(std::span<const ModelStats> stats) {
  std::vector<Vote> votes;
  for (const auto& s : stats) votes.push_back({false, s});
  return bayes_fuse(kEpsilon, votes);
}
inline double soft_target_ceiling(std::span<const ModelStats> stats) {
  std::vector<Vote> votes;
  for (const auto& s : stats) votes.push_back({true, s});
  return bayes_fuse(1.0 - kEpsilon, votes);
}

struct SoftTarget {
  std::string patch_id;
  double soft_p = 0.0;
  double ensemble_value = 0.0;
  int svm_vote = 0;
  int pixel_vote = 0;

  bool operator==(const SoftTarget&) const = default;
};

inline void to_json(nlohmann::json& j, const SoftTarget& t) {
  j = {{"patch_id", t.patch_id}, {"soft_p", t.soft_p}, {"ensemble_value", t.ensemble_value},
       {"svm_vote", t.svm_vote}, {"pixel_vote", t.pixel_vote}};
}
inline void from_json(const nlohmann::json& j, SoftTarget& t) {
  j.at("patch_id").get_to(t.patch_id);
  j.at("soft_p").get_to(t.soft_p);
  j.at("ensemble_value").get_to(t.ensemble_value);
  j.at("svm_vote").get_to(t.svm_vote);
  j.at("pixel_vote").get_to(t.pixel_vote);
  if (!(t.soft_p >= 0.0 && t.soft_p <= 1.0)) throw FormatError("soft target " + t.patch_id + " has soft_p outside [0, 1]");
}

inline void write_soft_targets(const std::filesystem::path& path, std::span<const SoftTarget> ts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NotFoundError("cannot write " + path.string());
  for (const auto& t : ts) out << nlohmann::json(t).dump() << '\n';
}

inline std::vector<SoftTarget> read_soft_targets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::vector<SoftTarget> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<SoftTarget>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace wastesite::distill
