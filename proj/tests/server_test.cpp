#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <unistd.h>

#include "wastesite/core/rng.hpp"
#include "wastesite/dataengine/labels.hpp"
#include "wastesite/dataengine/scene.hpp"
#include "wastesite/detect/pipeline.hpp"
#include "wastesite/monitor/footprint.hpp"
#include "wastesite/server/api.hpp"
#include "wastesite/server/store.hpp"

using namespace wastesite;
using namespace wastesite::server;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    const auto* t = ::testing::UnitTest::GetInstance()->current_test_info();
    path = fs::temp_directory_path() / ("wastesite-" + std::string(t->test_suite_name()) + "-" + t->name() + "-" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string fixed_clock() { return "2024-03-01T10:00:00Z"; }

CandidateSite site_at(double lon, double lat, std::string mode = "high", Month m = Month(2022, 6)) {
  CandidateSite c;
  c.geo = {lon, lat};
  c.pixel = {lon * 10.0, lat * 10.0};
  c.sigma = 4.0;
  c.pixel_score = 0.8;
  c.patch_score = 0.7;
  c.mode = std::move(mode);
  c.month = m;
  c.id = detect::site_id(c.geo, m);
  return c;
}

std::vector<CandidateSite> five_sites() {
  return {site_at(115.10, -8.50), site_at(115.20, -8.40, "med"), site_at(115.30, -8.30),
          site_at(115.40, -8.20, "low"), site_at(115.50, -8.10)};
}

Polygon square(double lon, double lat, double d) {
  return {{{lon - d, lat - d}, {lon + d, lat - d}, {lon + d, lat + d}, {lon - d, lat + d}}, {}};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Bbox, ParsesAndRejects) {
  const Box b = parse_bbox("115.1,-8.6,115.3,-8.2");
  EXPECT_EQ(b.min_x, 115.1);
  EXPECT_EQ(b.max_y, -8.2);
  for (const char* bad : {"", "1,2,3", "1,2,3,4,5", "a,2,3,4", "1,2,3,4,", "3,0,1,4", "0,5,1,4", "1,2,nan,4", "1, 2x,3,4"})
    EXPECT_THROW(parse_bbox(bad), DataError) << bad;
}

TEST(SiteStore, EmptyStoreListsNothing) {
  TempDir d;
  SiteStore s(d.path);
  EXPECT_TRUE(s.list_sites().empty());
  EXPECT_TRUE(s.labels().empty());
  EXPECT_TRUE(fs::exists(s.snapshot_path()));
}

TEST(SiteStore, FiltersAreConjunctiveAndOrderedById) {
  TempDir d;
  SiteStore s(d.path, fixed_clock);
  const auto sites = five_sites();
  EXPECT_EQ(s.add_candidates(sites), 5u);
  EXPECT_EQ(s.add_candidates(sites), 0u);
  s.submit_review(sites[0].id, {Decision::confirm, "", std::nullopt});
  s.submit_review(sites[2].id, {Decision::confirm, "", std::nullopt});

  const auto all = s.list_sites();
  ASSERT_EQ(all.size(), 5u);
  for (std::size_t k = 1; k < all.size(); ++k) EXPECT_LT(all[k - 1].site.id, all[k].site.id);

  EXPECT_EQ(s.list_sites({SiteStatus::confirmed, {}, {}}).size(), 2u);
  EXPECT_EQ(s.list_sites({SiteStatus::candidate, {}, {}}).size(), 3u);
  EXPECT_EQ(s.list_sites({{}, "high", {}}).size(), 3u);
  EXPECT_EQ(s.list_sites({SiteStatus::candidate, "high", {}}).size(), 1u);
  EXPECT_TRUE(s.list_sites({{}, {}, parse_bbox("0,0,1,1")}).empty());
  // bounds are inclusive
  EXPECT_EQ(s.list_sites({{}, {}, parse_bbox("115.1,-8.5,115.2,-8.4")}).size(), 2u);
}

TEST(SiteStore, SitesMustEnterAsCandidates) {
  TempDir d;
  SiteStore s(d.path);
  auto c = site_at(1, 2);
  c.status = SiteStatus::confirmed;
  EXPECT_THROW(s.add_candidates({c}), DataError);
  EXPECT_EQ(s.event_count(), 0u);
}

TEST(SiteStore, ContoursByMonthEmptyOrMissing) {
  TempDir d;
  SiteStore s(d.path);
  const auto sites = five_sites();
  s.add_candidates(sites);

  monitor::MonthlySeries series;
  for (int k = 0; k < 3; ++k) {
    series.months.push_back(Month(2022, 1) + k);
    detect::Heatmap h(8, 8);
    for (std::size_t i = 0; i < h.pixels(); ++i) {
      h.scores[i] = (i % 8) < std::size_t(3 + k) ? 0.9f : 0.1f;
      h.valid[i] = 1;
    }
    series.heatmaps.push_back(h);
  }
  const auto fp = monitor::footprint_series(sites[1].id, series);
  const auto geo = GeoTransform::north_up(115.2, -8.4, 10.0);
  s.attach_contours(sites[1].id, monitor::contours_geojson(fp, geo));

  const auto fc = s.get_contours(sites[1].id);
  ASSERT_EQ(fc["features"].size(), 3u);
  EXPECT_EQ(fc["site_id"], sites[1].id);
  EXPECT_EQ(monitor::parse_contours_geojson(fc, geo).records.size(), 3u);
  EXPECT_FALSE(s.get_site(sites[1].id).footprint.empty());

  const auto none = s.get_contours(sites[0].id);
  EXPECT_EQ(none["type"], "FeatureCollection");
  EXPECT_TRUE(none["features"].empty());
  EXPECT_THROW(s.get_contours("nope"), NotFoundError);

  auto backwards = monitor::contours_geojson(fp, geo);
  std::swap(backwards["features"][0], backwards["features"][2]);
  EXPECT_THROW(s.attach_contours(sites[0].id, backwards), DataError);
  EXPECT_THROW(s.attach_contours("nope", monitor::contours_geojson(fp, geo)), NotFoundError);
}

TEST(SiteStore, ConfirmWithPolygonGivesPositiveLabel) {
  TempDir d;
  SiteStore s(d.path, fixed_clock);
  const auto c = site_at(115.2, -8.4);
  s.add_candidates({c});
  const Polygon boundary = square(115.2, -8.4, 0.0003);
  const auto out = s.submit_review(c.id, {Decision::confirm, "dump by the road", boundary});
  EXPECT_TRUE(out.created);
  EXPECT_EQ(out.site.site.status, SiteStatus::confirmed);
  ASSERT_EQ(out.site.reviews.size(), 1u);
  EXPECT_EQ(out.site.reviews[0].timestamp, "2024-03-01T10:00:00Z");
  EXPECT_EQ(out.label.label, data::PatchClass::positive);
  ASSERT_TRUE(out.label.polygon.has_value());
  EXPECT_EQ(*out.label.polygon, boundary);
  EXPECT_EQ(out.label.source, "review");
  EXPECT_EQ(data::read_label_store(s.labels_path()), std::vector<data::LabelRecord>{out.label});
}

TEST(SiteStore, RejectGivesNegativeLabelAtLocation) {
  TempDir d;
  SiteStore s(d.path, fixed_clock);
  const auto c = site_at(115.3, -8.3);
  s.add_candidates({c});
  EXPECT_THROW(s.submit_review(c.id, {Decision::reject, "", square(115.3, -8.3, 1e-4)}), DataError);
  const auto out = s.submit_review(c.id, {Decision::reject, "greenhouse", std::nullopt});
  EXPECT_EQ(out.site.site.status, SiteStatus::rejected);
  EXPECT_EQ(out.label.label, data::PatchClass::negative);
  EXPECT_EQ(out.label.location, c.geo);
  EXPECT_FALSE(out.label.polygon.has_value());
  EXPECT_THROW(s.submit_review("missing", {}), NotFoundError);
}

TEST(SiteStore, ConflictingReviewLeavesStoreUnchanged) {
  TempDir d;
  SiteStore s(d.path, fixed_clock);
  const auto c = site_at(115.4, -8.2);
  s.add_candidates({c});
  const auto first = s.submit_review(c.id, {Decision::confirm, "ok", std::nullopt});
  const auto events = read_text(s.events_path());
  const auto labels = read_text(s.labels_path());
  const auto snapshot = read_text(s.snapshot_path());

  const auto again = s.submit_review(c.id, {Decision::confirm, "ok", std::nullopt});
  EXPECT_FALSE(again.created);
  EXPECT_EQ(again.site, first.site);
  EXPECT_EQ(again.label, first.label);

  EXPECT_THROW(s.submit_review(c.id, {Decision::reject, "ok", std::nullopt}), ConflictError);
  EXPECT_THROW(s.submit_review(c.id, {Decision::confirm, "different note", std::nullopt}), ConflictError);
  EXPECT_EQ(read_text(s.events_path()), events);
  EXPECT_EQ(read_text(s.labels_path()), labels);
  EXPECT_EQ(read_text(s.snapshot_path()), snapshot);
  EXPECT_EQ(s.get_site(c.id), first.site);
}

TEST(SiteStore, DegenerateBoundaryRejected) {
  TempDir d;
  SiteStore s(d.path);
  const auto c = site_at(1, 1);
  s.add_candidates({c});
  EXPECT_THROW(s.submit_review(c.id, {Decision::confirm, "", Polygon{{{0, 0}, {1, 1}}, {}}}), DataError);
  EXPECT_THROW(s.submit_review(c.id, {Decision::confirm, "", Polygon{{{0, 0}, {1, 1}, {2, 2}}, {}}}), DataError);
  EXPECT_EQ(s.get_site(c.id).site.status, SiteStatus::candidate);
}

TEST(SiteStore, ReplayReconstructsStateAfterRandomOperations) {
  TempDir d;
  std::vector<SiteRecord> before;
  std::vector<data::LabelRecord> labels;
  {
    int tick = 0;
    SiteStore s(d.path, [&] { return "2024-01-01T00:00:" + std::to_string(10 + tick++) + "Z"; });
    CounterRng rng(11);
    std::vector<CandidateSite> sites;
    for (int k = 0; k < 30; ++k) sites.push_back(site_at(115 + rng.uniform(), -8 - rng.uniform(), k % 2 ? "high" : "low"));
    s.add_candidates(sites);
    for (int step = 0; step < 80; ++step) {
      const auto& c = sites[rng.below(sites.size())];
      const auto pick = rng.below(4);
      try {
        if (pick == 0) s.submit_review(c.id, {Decision::confirm, "n" + std::to_string(step % 3), std::nullopt});
        if (pick == 1) s.submit_review(c.id, {Decision::reject, "", std::nullopt});
        if (pick == 2) s.submit_review(c.id, {Decision::confirm, "", square(c.geo.x, c.geo.y, 1e-4)});
        if (pick == 3) s.set_waterway(c.id, {rng.uniform() * 500, "river", "Ayung"});
      } catch (const ConflictError&) {
      }
    }
    before = s.list_sites();
    labels = s.labels();
  }
  SiteStore replayed(d.path);
  EXPECT_EQ(replayed.list_sites(), before);
  EXPECT_EQ(replayed.labels(), labels);
  EXPECT_EQ(data::read_label_store(replayed.labels_path()), labels);
  for (const auto& r : before) {
    // every transition has its review entry
    EXPECT_EQ(r.reviews.size(), r.site.status == SiteStatus::candidate ? 0u : 1u);
  }
}

TEST(SiteStore, LabelViewIsRebuiltFromTheLog) {
  TempDir d;
  std::vector<data::LabelRecord> labels;
  {
    SiteStore s(d.path, fixed_clock);
    const auto sites = five_sites();
    s.add_candidates(sites);
    s.submit_review(sites[3].id, {Decision::reject, "", std::nullopt});
    labels = s.labels();
  }
  fs::remove(d.path / "labels.jsonl");
  SiteStore s(d.path);
  EXPECT_EQ(data::read_label_store(s.labels_path()), labels);
}

TEST(SiteStore, CorruptLogIsAFormatError) {
  TempDir d;
  fs::create_directories(d.path);
  std::ofstream(d.path / "events.jsonl") << "{\"type\":\"site\"\n";
  EXPECT_THROW(SiteStore{d.path}, FormatError);
  std::ofstream(d.path / "events.jsonl") << "{\"type\":\"bogus\",\"site_id\":\"x\"}\n";
  EXPECT_THROW(SiteStore{d.path}, Error);
}

TEST(Serialization, SiteRecordsRoundTrip) {
  CounterRng rng(3);
  std::vector<SiteRecord> rs;
  for (int k = 0; k < 50; ++k) {
    SiteRecord r;
    r.site = site_at(100 + 10 * rng.uniform(), -10 * rng.uniform(), k % 3 ? "med" : "high", Month(2020, 1) + k);
    r.site.pixel_score = rng.uniform();
    r.site.patch_score = rng.uniform() / 3.0;
    r.site.sigma = 2.0 + rng.uniform();
    if (k % 2) {
      r.site.status = k % 4 == 1 ? SiteStatus::confirmed : SiteStatus::rejected;
      r.reviews.push_back({k % 4 == 1 ? Decision::confirm : Decision::reject, "note " + std::to_string(k), "2024-01-01T00:00:00Z",
                           k % 4 == 1 ? std::optional<Polygon>(square(r.site.geo.x, r.site.geo.y, 1e-4 * rng.uniform() + 1e-5))
                                      : std::nullopt});
    }
    if (k % 5 == 0) r.footprint = "contours/" + r.site.id + ".geojson";
    if (k % 3 == 0) r.waterway = monitor::WaterwayDistance{rng.uniform() * 1e4, "canal", "Tukad"};
    rs.push_back(r);
    const auto text = site_feature(r).dump();
    EXPECT_EQ(parse_site_feature(nlohmann::json::parse(text)), r);
  }
  EXPECT_EQ(parse_sites_geojson(nlohmann::json::parse(sites_geojson(rs).dump())), rs);
  EXPECT_THROW(parse_site_feature(nlohmann::json::object()), FormatError);

  data::LabelRecord l{"abc", data::PatchClass::positive, {115.1, -8.2}, 3.5, square(115.1, -8.2, 1e-4), Month(2021, 4), "review"};
  EXPECT_EQ(nlohmann::json::parse(nlohmann::json(l).dump()).get<data::LabelRecord>(), l);
}

// Confirmed and rejected sites reach the next pixel-dataset assembly through labels.jsonl.
TEST(LabelLoop, ReviewedSitesFeedTheNextAssembly) {
  data::SceneSpec spec;
  spec.width = 96;
  spec.height = 96;
  spec.months = 9;
  spec.seed = 21;
  spec.cloud_fraction = 0.0;
  spec.rivers = 0;
  CounterRng shape(5);
  const Polygon outline = data::star_polygon({40, 44}, 8.0, shape);
  spec.features.push_back({"w1", data::FeatureKind::waste_site, {{spec.start, outline}}, 1.0, true, 0});
  const auto scene = data::generate_scene(spec);
  const auto field = detect::paired_field(scene.frames, scene.last() - 2);
  const GeoTransform geo = spec.geo;

  TempDir d;
  SiteStore s(d.path, fixed_clock);
  auto hit = site_at(0, 0);
  hit.geo = geo.to_geo({40.5, 44.5});
  hit.id = detect::site_id(hit.geo, hit.month);
  auto miss = site_at(0, 0);
  miss.geo = geo.to_geo({75.5, 20.5});
  miss.id = detect::site_id(miss.geo, miss.month);
  s.add_candidates({hit, miss});
  s.submit_review(hit.id, {Decision::confirm, "", data::to_geo(outline, geo)});
  s.submit_review(miss.id, {Decision::reject, "", std::nullopt});

  const auto regions = data::regions_from_labels(data::read_label_store(s.labels_path()), field, geo);
  ASSERT_EQ(regions.size(), 2u);
  const auto ds = data::assemble_pixel_dataset(regions);

  // the same outline labelled directly on the full field
  data::LabeledRegion direct{"direct", field, data::PatchClass::positive, {data::to_pixel(data::to_geo(outline, geo), geo)}};
  const auto expect = data::assemble_pixel_dataset(std::vector<data::LabeledRegion>{direct});
  EXPECT_GT(expect.positives.size(), 100u);
  EXPECT_EQ(ds.positives.size(), expect.positives.size());
  EXPECT_EQ(ds.negatives.size(), regions[1].field.spectrograms().size());
  EXPECT_EQ(regions[1].field.width, data::kPatchSize);
}

TEST(LabelLoop, OutlineIsClippedToTheField) {
  data::SpectrogramField field;
  field.width = field.height = 40;
  field.values.resize(40 * 40 * data::kSpectrogramSize);
  for (std::size_t i = 0; i < field.values.size(); ++i) field.values[i] = 0.1f + 0.01f * float(i / data::kSpectrogramSize % 7);
  field.valid.assign(40 * 40, 1);
  GeoTransform geo;
  data::LabelRecord l{"edge", data::PatchClass::positive, geo.to_geo({2, 2}), 3.0, std::nullopt, Month(2020, 1), "review"};
  l.polygon = data::to_geo(Polygon{{{-10, -10}, {10, -10}, {10, 10}, {-10, 10}}, {}}, geo);
  const auto regions = data::regions_from_labels({l}, field, geo);
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_EQ(regions[0].field.width, 28u);
  ASSERT_EQ(regions[0].polygons.size(), 1u);
  EXPECT_DOUBLE_EQ(area(regions[0].polygons[0]), 100.0);
  EXPECT_EQ(data::assemble_pixel_dataset(regions).positives.size(), 100u);
}

class ApiTest : public ::testing::Test {
 protected:
  void SetUp() override {
    store = std::make_unique<SiteStore>(dir.path, fixed_clock);
    sites = five_sites();
    store->add_candidates(sites);
    mount_api(srv, *store);
    port = srv.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    thread = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }
  void TearDown() override {
    srv.stop();
    thread.join();
  }
  httplib::Client client() { return httplib::Client("127.0.0.1", port); }

  TempDir dir;
  std::unique_ptr<SiteStore> store;
  std::vector<CandidateSite> sites;
  httplib::Server srv;
  std::thread thread;
  int port = 0;
};

TEST_F(ApiTest, ListAndFilterSites) {
  auto c = client();
  auto res = c.Get("/sites");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto fc = nlohmann::json::parse(res->body);
  EXPECT_EQ(parse_sites_geojson(fc), store->list_sites());

  res = c.Get("/sites?mode=high&bbox=115.25,-8.35,115.6,-8.0");
  ASSERT_TRUE(res);
  EXPECT_EQ(nlohmann::json::parse(res->body)["features"].size(), 2u);
  res = c.Get("/sites?bbox=1,2,3");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_NE(nlohmann::json::parse(res->body)["error"].get<std::string>().find("bbox"), std::string::npos);
  res = c.Get("/sites?status=pending");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(ApiTest, SiteAndContours) {
  auto c = client();
  auto res = c.Get("/sites/" + sites[2].id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(parse_site_feature(nlohmann::json::parse(res->body)), store->get_site(sites[2].id));
  res = c.Get("/sites/unknown");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = c.Get("/sites/unknown/contours");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = c.Get("/sites/" + sites[2].id + "/contours");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_TRUE(nlohmann::json::parse(res->body)["features"].empty());
}

TEST_F(ApiTest, ReviewLifecycle) {
  auto c = client();
  const std::string path = "/sites/" + sites[0].id + "/review";
  nlohmann::json body = {{"decision", "confirm"}, {"note", "seen"}, {"polygon", square(sites[0].geo.x, sites[0].geo.y, 1e-4)}};
  auto res = c.Post(path, body.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j["site"]["properties"]["status"], "confirmed");
  EXPECT_EQ(j["label"]["class"], "positive");

  res = c.Post(path, body.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = c.Post(path, R"({"decision":"reject"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j["site"]["properties"]["status"], "confirmed");

  res = c.Post("/sites/" + sites[1].id + "/review", R"({"decision":"maybe"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = c.Post("/sites/" + sites[1].id + "/review", "not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = c.Post("/sites/" + sites[1].id + "/review", R"({"decision":"reject"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);

  res = c.Get("/labels");
  ASSERT_TRUE(res);
  EXPECT_EQ(nlohmann::json::parse(res->body).get<std::vector<data::LabelRecord>>(), store->labels());
  EXPECT_EQ(store->labels().size(), 2u);
  res = c.Get("/sites?status=confirmed");
  ASSERT_TRUE(res);
  EXPECT_EQ(nlohmann::json::parse(res->body)["features"].size(), 1u);
}

TEST_F(ApiTest, ConcurrentReviewsOfOneSiteKeepTheFirstDecision) {
  const std::string path = "/sites/" + sites[4].id + "/review";
  std::atomic<int> created{0}, conflicts{0};
  std::vector<std::thread> ts;
  for (int k = 0; k < 6; ++k)
    ts.emplace_back([&, k] {
      auto c = client();
      auto res = c.Post(path, k % 2 ? R"({"decision":"reject"})" : R"({"decision":"confirm"})", "application/json");
      if (res && res->status == 201) ++created;
      if (res && res->status == 409) ++conflicts;
    });
  for (auto& t : ts) t.join();
  EXPECT_EQ(created.load(), 1);
  EXPECT_GE(conflicts.load(), 2);
  EXPECT_EQ(store->labels().size(), 1u);
}
