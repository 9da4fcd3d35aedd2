#pragma once

#include <string>

#include "httplib.h"
// <resolv.h>, pulled in by httplib, defines _res, which Eigen uses as a parameter name
#ifdef _res
#undef _res
#endif
#include "json.hpp"
#include "wastesite/server/store.hpp"

namespace wastesite::server {

namespace detail {

inline void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void reply_error(httplib::Response& res, int status, const std::string& what) {
  reply(res, status, {{"error", what}, {"status", status}});
}

/// Maps store errors onto HTTP statuses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    reply_error(res, 404, e.what());
  } catch (const ConflictError& e) {
    reply_error(res, 409, e.what());
  } catch (const DataError& e) {
    reply_error(res, 400, e.what());
  } catch (const FormatError& e) {
    reply_error(res, 400, e.what());
  } catch (const nlohmann::json::exception& e) {
    reply_error(res, 400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, e.what());
  }
}

inline SiteFilter filter_from(const httplib::Request& req) {
  SiteFilter f;
  if (req.has_param("status")) {
    const std::string s = req.get_param_value("status");
    if (s != "candidate" && s != "confirmed" && s != "rejected") throw DataError("unknown status '" + s + "'");
    f.status = nlohmann::json(s).get<SiteStatus>();
  }
  if (req.has_param("mode")) f.mode = req.get_param_value("mode");
  if (req.has_param("bbox")) f.bbox = parse_bbox(req.get_param_value("bbox"));
  return f;
}

inline ReviewRequest review_from(const std::string& body) {
  const auto j = nlohmann::json::parse(body);
  if (!j.is_object()) throw DataError("review body must be a JSON object");
  ReviewRequest r;
  const std::string d = j.at("decision").get<std::string>();
  if (d != "confirm" && d != "reject") throw DataError("decision must be 'confirm' or 'reject', got '" + d + "'");
  r.decision = d == "confirm" ? Decision::confirm : Decision::reject;
  r.note = j.value("note", "");
  if (j.contains("polygon") && !j["polygon"].is_null()) r.polygon = j["polygon"].get<Polygon>();
  return r;
}

}  // namespace detail

/// GET  /sites                 FeatureCollection; query status, mode, bbox=minlon,minlat,maxlon,maxlat
/// GET  /sites/{id}            Feature
/// GET  /sites/{id}/contours   monthly contour FeatureCollection
/// POST /sites/{id}/review     {"decision": "confirm"|"reject", "note": "...", "polygon": [[[lon, lat], ...]]}
/// GET  /labels                label records, oldest first
inline void mount_api(httplib::Server& srv, SiteStore& store) {
  using httplib::Request;
  using httplib::Response;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(/.*)", [](const Request&, Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  srv.Get("/sites", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] { detail::reply(res, 200, sites_geojson(store.list_sites(detail::filter_from(req)))); });
  });
  srv.Get("/sites/:id", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] { detail::reply(res, 200, site_feature(store.get_site(req.path_params.at("id")))); });
  });
  srv.Get("/sites/:id/contours", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] { detail::reply(res, 200, store.get_contours(req.path_params.at("id"))); });
  });
  srv.Post("/sites/:id/review", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      const std::string id = req.path_params.at("id");
      try {
        const auto out = store.submit_review(id, detail::review_from(req.body));
        detail::reply(res, out.created ? 201 : 200, {{"site", site_feature(out.site)}, {"label", out.label}});
      } catch (const ConflictError& e) {
        // the curator sees what was decided first
        detail::reply(res, 409, {{"error", e.what()}, {"status", 409}, {"site", site_feature(store.get_site(id))}});
      }
    });
  });
  srv.Get("/labels", [&store](const Request&, Response& res) {
    detail::guarded(res, [&] { detail::reply(res, 200, store.labels()); });
  });
}

}  // namespace wastesite::server
