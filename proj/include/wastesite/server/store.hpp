#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/core/hash.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/labels.hpp"
#include "wastesite/detect/candidate.hpp"
#include "wastesite/monitor/waterway.hpp"

namespace wastesite::server {

namespace fs = std::filesystem;
using detect::CandidateSite;
using detect::SiteStatus;

enum class Decision { confirm, reject };

NLOHMANN_JSON_SERIALIZE_ENUM(Decision, {{Decision::confirm, "confirm"}, {Decision::reject, "reject"}})

struct ReviewEntry {
  Decision decision = Decision::confirm;
  std::string note;
  /// UTC, ISO 8601.
  std::string timestamp;
  /// Hand-drawn boundary in geographic coordinates; confirmations only.
  std::optional<Polygon> polygon;
  bool operator==(const ReviewEntry&) const = default;
};

struct SiteRecord {
  CandidateSite site;
  std::vector<ReviewEntry> reviews;
  /// Store-relative path of the monthly contour collection; empty until monitoring ran.
  std::string footprint;
  std::optional<monitor::WaterwayDistance> waterway;
  bool operator==(const SiteRecord&) const = default;
};

struct ReviewRequest {
  Decision decision = Decision::confirm;
  std::string note;
  std::optional<Polygon> polygon;
};

struct ReviewOutcome {
  SiteRecord site;
  data::LabelRecord label;
  /// False when an identical earlier submission was replayed back.
  bool created = true;
};

struct SiteFilter {
  std::optional<SiteStatus> status;
  std::optional<std::string> mode;
  /// Geographic (lon/lat) box; bounds inclusive.
  std::optional<Box> bbox;
};

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// "min_lon,min_lat,max_lon,max_lat".
inline Box parse_bbox(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(x)) throw DataError("bbox: '" + item + "' is not a finite number");
    v.push_back(x);
  }
  if (v.size() != 4 || (!text.empty() && text.back() == ','))
    throw DataError("bbox needs 4 comma-separated numbers, got '" + text + "'");
  if (v[0] > v[2] || v[1] > v[3]) throw DataError("bbox minimum exceeds maximum in '" + text + "'");
  Box b;
  b.expand({v[0], v[1]});
  b.expand({v[2], v[3]});
  return b;
}

inline bool matches(const SiteRecord& r, const SiteFilter& f) {
  if (f.status && r.site.status != *f.status) return false;
  if (f.mode && r.site.mode != *f.mode) return false;
  if (f.bbox && !f.bbox->contains(r.site.geo)) return false;
  return true;
}

inline void to_json(nlohmann::json& j, const ReviewEntry& e) {
  j = {{"decision", e.decision}, {"note", e.note}, {"timestamp", e.timestamp}};
  j["polygon"] = e.polygon ? nlohmann::json(*e.polygon) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, ReviewEntry& e) {
  j.at("decision").get_to(e.decision);
  j.at("note").get_to(e.note);
  j.at("timestamp").get_to(e.timestamp);
  e.polygon.reset();
  if (j.contains("polygon") && !j.at("polygon").is_null()) e.polygon = j.at("polygon").get<Polygon>();
}

/// GeoJSON point feature: the candidate fields plus review history and metadata.
inline nlohmann::json site_feature(const SiteRecord& r) {
  nlohmann::json f = detect::candidate_feature(r.site);
  auto& p = f["properties"];
  p["reviews"] = r.reviews;
  p["footprint"] = r.footprint.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.footprint);
  if (r.waterway)
    p["waterway"] = {{"meters", r.waterway->meters}, {"tag", r.waterway->tag}, {"name", r.waterway->name}};
  else
    p["waterway"] = nullptr;
  return f;
}

inline SiteRecord parse_site_feature(const nlohmann::json& f) {
  try {
    SiteRecord r;
    r.site = detect::parse_candidate_feature(f);
    const auto& p = f.at("properties");
    p.at("reviews").get_to(r.reviews);
    if (!p.at("footprint").is_null()) p.at("footprint").get_to(r.footprint);
    if (!p.at("waterway").is_null()) {
      const auto& w = p.at("waterway");
      r.waterway = monitor::WaterwayDistance{w.at("meters").get<double>(), w.at("tag").get<std::string>(),
                                             w.at("name").get<std::string>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("site feature: ") + e.what());
  }
}

inline nlohmann::json sites_geojson(const std::vector<SiteRecord>& rs) {
  auto features = nlohmann::json::array();
  for (const auto& r : rs) features.push_back(site_feature(r));
  return geojson::collection(std::move(features));
}

inline std::vector<SiteRecord> parse_sites_geojson(const nlohmann::json& fc) {
  std::vector<SiteRecord> out;
  try {
    for (const auto& f : fc.at("features")) out.push_back(parse_site_feature(f));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("site collection: ") + e.what());
  }
  return out;
}

/// Confirmations become positives (with the drawn boundary if any), rejections negatives.
inline data::LabelRecord label_for(const CandidateSite& site, const ReviewEntry& e) {
  data::LabelRecord l;
  l.site_id = site.id;
  l.label = e.decision == Decision::confirm ? data::PatchClass::positive : data::PatchClass::negative;
  l.location = site.geo;
  l.radius_px = site.sigma;
  l.polygon = e.polygon;
  l.month = site.month;
  return l;
}

/// Site store backed by an append-only event log (events.jsonl). Every mutation is one
/// event written before memory changes, so a failed write leaves the store as it was and
/// replaying the log rebuilds the state exactly. labels.jsonl and sites.geojson are
/// materialized views for the data engine and for people.
///
/// Writers are serialized; readers share a lock and always see a whole event applied.
class SiteStore {
 public:
  using Clock = std::function<std::string()>;

  explicit SiteStore(fs::path dir, Clock clock = utc_now) : dir_(std::move(dir)), clock_(std::move(clock)) {
    fs::create_directories(dir_);
    std::ifstream in(events_path());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      nlohmann::json ev;
      try {
        ev = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(events_path().string() + ":" + std::to_string(n) + ": " + e.what());
      }
      try {
        apply(ev);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(events_path().string() + ":" + std::to_string(n) + ": " + e.what());
      }
      ++events_;
    }
    // views may lag the log after an interrupted write
    if (data::read_label_store(labels_path()) != labels_) rewrite_labels();
    write_snapshot();
  }

  const fs::path& dir() const noexcept { return dir_; }
  fs::path events_path() const { return dir_ / "events.jsonl"; }
  fs::path labels_path() const { return dir_ / "labels.jsonl"; }
  fs::path snapshot_path() const { return dir_ / "sites.geojson"; }

  std::size_t event_count() const {
    std::shared_lock lock(mu_);
    return events_;
  }

  /// New sites enter as candidates; ids already present are left untouched.
  std::size_t add_candidates(const std::vector<CandidateSite>& sites) {
    std::unique_lock lock(mu_);
    std::size_t added = 0;
    for (const auto& s : sites) {
      if (s.id.empty()) throw DataError("candidate without id");
      if (s.status != SiteStatus::candidate) throw DataError("site " + s.id + " must enter the store as a candidate");
      if (sites_.count(s.id)) continue;
      commit({{"type", "site"}, {"site", s}});
      ++added;
    }
    if (added) write_snapshot();
    return added;
  }

  /// Stores a monthly contour collection (see monitor::contours_geojson) for a site.
  void attach_contours(const std::string& id, nlohmann::json fc) {
    std::unique_lock lock(mu_);
    require(id);
    if (fc.value("type", "") != "FeatureCollection" || !fc.contains("features") || !fc["features"].is_array())
      throw DataError("contours for " + id + " must be a FeatureCollection");
    Month prev;
    bool first = true;
    for (const auto& f : fc["features"]) {
      Month m;
      try {
        m = Month::parse(f.at("properties").at("month").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw DataError("contours for " + id + ": " + e.what());
      }
      if (!first && !(prev < m)) throw DataError("contours for " + id + ": months must strictly increase");
      prev = m;
      first = false;
    }
    fc["site_id"] = id;
    const std::string text = fc.dump();
    const std::string ref = "contours/" + id + "-" + hex_digest(fnv1a64(text), 12) + ".geojson";
    fs::create_directories(dir_ / "contours");
    {
      std::ofstream out(dir_ / ref);
      out << text << '\n';
      if (!out) throw FormatError("cannot write " + (dir_ / ref).string());
    }
    commit({{"type", "footprint"}, {"site_id", id}, {"ref", ref}});
    write_snapshot();
  }

  void set_waterway(const std::string& id, const monitor::WaterwayDistance& d) {
    std::unique_lock lock(mu_);
    require(id);
    commit({{"type", "waterway"}, {"site_id", id}, {"meters", d.meters}, {"tag", d.tag}, {"name", d.name}});
    write_snapshot();
  }

  /// Conjunctive filter, ordered by id.
  std::vector<SiteRecord> list_sites(const SiteFilter& f = {}) const {
    std::shared_lock lock(mu_);
    std::vector<SiteRecord> out;
    for (const auto& [id, r] : sites_)
      if (matches(r, f)) out.push_back(r);
    return out;
  }

  SiteRecord get_site(const std::string& id) const {
    std::shared_lock lock(mu_);
    return require(id);
  }

  /// The monthly contour collection; an empty collection when none was computed.
  nlohmann::json get_contours(const std::string& id) const {
    std::string ref;
    {
      std::shared_lock lock(mu_);
      ref = require(id).footprint;
    }
    if (ref.empty()) {
      auto fc = geojson::collection(nlohmann::json::array());
      fc["site_id"] = id;
      return fc;
    }
    return data::read_json(dir_ / ref);
  }

  std::vector<data::LabelRecord> labels() const {
    std::shared_lock lock(mu_);
    return labels_;
  }

  /// candidate -> confirmed/rejected. Repeating the identical submission returns the stored
  /// outcome; anything else on a reviewed site is a conflict and the first decision stands.
  ReviewOutcome submit_review(const std::string& id, const ReviewRequest& req) {
    std::unique_lock lock(mu_);
    const SiteRecord& r = require(id);
    if (req.polygon) {
      if (req.decision != Decision::confirm) throw DataError("a boundary polygon comes only with a confirmation");
      check_boundary(*req.polygon);
    }
    if (r.site.status != SiteStatus::candidate) {
      const ReviewEntry& first = r.reviews.back();
      if (first.decision == req.decision && first.note == req.note && first.polygon == req.polygon)
        return {r, label_for(r.site, first), false};
      throw ConflictError("site " + id + " was already " + detect::to_string(r.site.status) + " at " + first.timestamp);
    }
    ReviewEntry e{req.decision, req.note, clock_(), req.polygon};
    nlohmann::json ev = e;
    ev["type"] = "review";
    ev["site_id"] = id;
    commit(std::move(ev));
    const SiteRecord& now = sites_.at(id);
    {
      std::ofstream out(labels_path(), std::ios::app);
      out << nlohmann::json(labels_.back()).dump() << '\n';
    }
    write_snapshot();
    return {now, labels_.back(), true};
  }

 private:
  static void check_boundary(const Polygon& p) {
    if (p.outer.size() < 3) throw DataError("boundary polygon needs at least 3 vertices");
    for (const auto& v : p.outer)
      if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw DataError("boundary polygon has a non-finite vertex");
    if (signed_area(p.outer) == 0.0) throw DataError("boundary polygon has zero area");
  }

  const SiteRecord& require(const std::string& id) const {
    const auto it = sites_.find(id);
    if (it == sites_.end()) throw NotFoundError("no site with id '" + id + "'");
    return it->second;
  }

  /// Applies to a scratch copy first, appends to the log, then swaps the change in.
  void commit(nlohmann::json ev) {
    ev["seq"] = events_ + 1;
    auto sites = sites_;
    auto labels = labels_;
    std::swap(sites, sites_);
    std::swap(labels, labels_);
    try {
      apply(ev);
    } catch (...) {
      std::swap(sites, sites_);
      std::swap(labels, labels_);
      throw;
    }
    std::ofstream out(events_path(), std::ios::app);
    out << ev.dump() << '\n';
    out.flush();
    if (!out) {
      std::swap(sites, sites_);
      std::swap(labels, labels_);
      throw FormatError("cannot append to " + events_path().string());
    }
    ++events_;
  }

  void apply(const nlohmann::json& ev) {
    const std::string type = ev.at("type").get<std::string>();
    if (type == "site") {
      auto s = ev.at("site").get<CandidateSite>();
      const std::string id = s.id;
      sites_.emplace(id, SiteRecord{std::move(s), {}, {}, std::nullopt});
      return;
    }
    const auto it = sites_.find(ev.at("site_id").get<std::string>());
    if (it == sites_.end()) throw FormatError("event refers to unknown site '" + ev.at("site_id").get<std::string>() + "'");
    SiteRecord& r = it->second;
    if (type == "footprint") {
      r.footprint = ev.at("ref").get<std::string>();
    } else if (type == "waterway") {
      r.waterway = monitor::WaterwayDistance{ev.at("meters").get<double>(), ev.at("tag").get<std::string>(),
                                             ev.at("name").get<std::string>()};
    } else if (type == "review") {
      if (r.site.status != SiteStatus::candidate) throw ConflictError("event log reviews site " + r.site.id + " twice");
      auto e = ev.get<ReviewEntry>();
      r.site.status = e.decision == Decision::confirm ? SiteStatus::confirmed : SiteStatus::rejected;
      labels_.push_back(label_for(r.site, e));
      r.reviews.push_back(std::move(e));
    } else {
      throw FormatError("unknown event type '" + type + "'");
    }
  }

  void rewrite_labels() const {
    std::ofstream out(labels_path(), std::ios::trunc);
    for (const auto& l : labels_) out << nlohmann::json(l).dump() << '\n';
  }

  void write_snapshot() const {
    std::vector<SiteRecord> all;
    for (const auto& [id, r] : sites_) all.push_back(r);
    const fs::path tmp = dir_ / "sites.geojson.tmp";
    data::write_json(tmp, sites_geojson(all));
    fs::rename(tmp, snapshot_path());
  }

  fs::path dir_;
  Clock clock_;
  mutable std::shared_mutex mu_;
  std::map<std::string, SiteRecord> sites_;
  std::vector<data::LabelRecord> labels_;
  std::size_t events_ = 0;
};

}  // namespace wastesite::server
