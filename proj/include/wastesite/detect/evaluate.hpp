#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/month.hpp"
#include "wastesite/dataengine/scene.hpp"
#include "wastesite/detect/pipeline.hpp"

namespace wastesite::detect {

/// Pixel distance from p to a polygon's area; 0 inside.
inline double polygon_distance(const Polygon& poly, Point p) {
  if (contains(poly, p)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  const Ring& r = poly.outer;
  for (std::size_t i = 0; i < r.size(); ++i) best = std::min(best, segment_distance(p, r[i], r[(i + 1) % r.size()]));
  return best;
}

struct TruthMatch {
  std::string feature_id;
  data::FeatureKind kind;
  bool flagged = false;  // some blob before cross-validation
  bool kept = false;     // some accepted candidate
};

struct DetectionScore {
  Month month;
  std::vector<TruthMatch> features;
  std::size_t sites = 0, sites_found = 0;
  std::size_t confounders = 0, confounders_flagged = 0, confounders_rejected = 0;
  std::size_t kept = 0, kept_on_sites = 0;

  double recall() const noexcept { return sites ? double(sites_found) / double(sites) : 0.0; }
  double precision() const noexcept { return kept ? double(kept_on_sites) / double(kept) : 0.0; }
  /// Share of pixel-flagged confounders that the patch stage turned away; 1 when none were flagged.
  double confounder_rejection() const noexcept {
    return confounders_flagged ? double(confounders_rejected) / double(confounders_flagged) : 1.0;
  }
};

/// Scores a detection run against planted features present at the latest detection month.
/// A candidate hits a feature when its centre lies within `tolerance` pixels of the outline.
inline DetectionScore score_detection(const DetectionResult& r, const std::vector<data::PlantedFeature>& features,
                                      double tolerance = 3.0) {
  if (r.months.empty()) throw DataError("detection result has no months to score");
  DetectionScore s;
  s.month = r.months.front();
  auto hits = [&](const Polygon& poly, const std::vector<CandidateSite>& cs) {
    return std::any_of(cs.begin(), cs.end(), [&](const CandidateSite& c) { return polygon_distance(poly, c.pixel) <= tolerance; });
  };
  std::vector<const Polygon*> site_polys;
  for (const auto& f : features) {
    const Polygon* poly = f.polygon_at(s.month);
    if (!poly) continue;
    TruthMatch m{f.id, f.kind, hits(*poly, r.blobs), hits(*poly, r.candidates())};
    if (f.kind == data::FeatureKind::waste_site) {
      site_polys.push_back(poly);
      ++s.sites;
      s.sites_found += m.kept;
    } else {
      ++s.confounders;
      s.confounders_flagged += m.flagged;
      s.confounders_rejected += m.flagged && !m.kept;
    }
    s.features.push_back(std::move(m));
  }
  for (const auto& c : r.candidates()) {
    ++s.kept;
    s.kept_on_sites += std::any_of(site_polys.begin(), site_polys.end(),
                                   [&](const Polygon* p) { return polygon_distance(*p, c.pixel) <= tolerance; });
  }
  return s;
}

inline void to_json(nlohmann::json& j, const DetectionScore& s) {
  auto fs = nlohmann::json::array();
  for (const auto& m : s.features) fs.push_back({{"id", m.feature_id}, {"kind", m.kind}, {"flagged", m.flagged}, {"kept", m.kept}});
  j = {{"month", s.month.str()},
       {"sites", s.sites},
       {"sites_found", s.sites_found},
       {"recall", s.recall()},
       {"candidates", s.kept},
       {"candidates_on_sites", s.kept_on_sites},
       {"precision", s.precision()},
       {"confounders", s.confounders},
       {"confounders_flagged", s.confounders_flagged},
       {"confounders_rejected", s.confounders_rejected},
       {"confounder_rejection", s.confounder_rejection()},
       {"features", fs}};
}

}  // namespace wastesite::detect
