#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "wastesite/core/components.hpp"
#include "wastesite/core/config.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/scene.hpp"
#include "wastesite/detect/blobs.hpp"
#include "wastesite/detect/cross_validate.hpp"
#include "wastesite/detect/evaluate.hpp"
#include "wastesite/detect/heatmap.hpp"
#include "wastesite/detect/patch_grid.hpp"
#include "wastesite/detect/pipeline.hpp"

using namespace wastesite;
using namespace wastesite::detect;
namespace fs = std::filesystem;

namespace {

data::SpectrogramField random_field(std::size_t w, std::size_t h, std::uint64_t seed, double p_invalid = 0.0) {
  CounterRng rng(seed);
  data::SpectrogramField f;
  f.width = w;
  f.height = h;
  f.normalized = true;
  f.values.resize(w * h * data::kSpectrogramSize);
  for (auto& v : f.values) v = static_cast<float>(rng.normal());
  f.valid.assign(w * h, 1);
  for (std::size_t i = 0; i < w * h; ++i) {
    if (rng.uniform() < p_invalid) {
      f.valid[i] = 0;
      std::fill_n(f.values.begin() + static_cast<std::ptrdiff_t>(i * data::kSpectrogramSize), data::kSpectrogramSize, 0.0f);
    }
  }
  return f;
}

models::PatchWidths tiny() {
  models::PatchWidths w;
  w.conv[0] = w.conv[1] = w.conv[2] = 4;
  w.dense[0] = w.dense[1] = 8;
  return w;
}

Heatmap bumps(std::size_t w, std::size_t h, const std::vector<Point>& centers, double sigma, double peak) {
  Heatmap m(w, h);
  std::fill(m.valid.begin(), m.valid.end(), 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& c : centers) {
        const double dx = double(x) - c.x, dy = double(y) - c.y;
        v = std::max(v, peak * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
      }
      m.scores[y * w + x] = static_cast<float>(v);
    }
  return m;
}

SensitivityMode mode(const std::string& name) { return mode_from_config(default_config(), name); }

PatchScoreGrid grid_44(std::vector<float> scores) {
  PatchScoreGrid g;
  g.cols = g.rows = 3;
  g.field_width = g.field_height = 44;
  g.scores = std::move(scores);
  return g;
}

CandidateSite at(double x, double y, const std::string& id = "c") {
  CandidateSite c;
  c.id = id;
  c.pixel = {x, y};
  return c;
}

}  // namespace

TEST(Heatmap, ConstantFieldGivesConstantHeatmap) {
  const auto net = models::make_pixel_classifier(3);
  auto f = random_field(40, 7, 1);
  for (std::size_t i = 1; i < f.pixels(); ++i)
    std::copy_n(f.values.begin(), data::kSpectrogramSize, f.values.begin() + static_cast<std::ptrdiff_t>(i * data::kSpectrogramSize));
  const auto h = infer_heatmap(net, f);
  for (float s : h.scores) EXPECT_EQ(s, h.scores[0]);
  EXPECT_GE(h.scores[0], 0.0f);
  EXPECT_LE(h.scores[0], 1.0f);
}

TEST(Heatmap, FourTilesMatchUntiledBitwise) {
  const auto net = models::make_pixel_classifier(5);
  const auto f = random_field(64, 64, 2);
  const auto whole = infer_heatmap(net, f);
  Heatmap stitched(64, 64);
  for (std::size_t ty = 0; ty < 2; ++ty)
    for (std::size_t tx = 0; tx < 2; ++tx) {
      const auto t = infer_heatmap(net, f.crop(32 * tx, 32 * ty, 32, 32), 32 * tx, 32 * ty);
      EXPECT_EQ(t.x0, 32 * tx);
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) stitched.scores[(32 * ty + y) * 64 + 32 * tx + x] = t.at(x, y);
    }
  EXPECT_EQ(stitched.scores, whole.scores);
}

TEST(Heatmap, TilingAndWorkersNeverChangeScores) {
  const auto net = models::make_pixel_classifier(6);
  const auto f = random_field(70, 23, 3, 0.1);
  const auto ref = infer_heatmap(net, f);
  for (auto [tx, ty] : {std::pair{1, 1}, {2, 2}, {4, 4}, {3, 5}, {7, 1}})
    for (std::size_t workers : {1, 4}) {
      const auto h = infer_heatmap_tiled(net, f, tx, ty, workers);
      EXPECT_EQ(h.scores, ref.scores) << tx << "x" << ty << " workers " << workers;
      EXPECT_EQ(h.valid, ref.valid);
    }
}

TEST(Heatmap, InvalidPixelsScoreZeroAndAreFlagged) {
  const auto net = models::make_pixel_classifier(7);
  const auto f = random_field(30, 30, 4, 0.25);
  const auto h = infer_heatmap(net, f);
  for (std::size_t i = 0; i < f.pixels(); ++i) {
    EXPECT_EQ(h.valid[i], f.valid[i]);
    if (!f.valid[i]) EXPECT_EQ(h.scores[i], 0.0f);
  }
}

TEST(Heatmap, RejectsRawFieldsAndForeignModels) {
  auto f = random_field(8, 8, 5);
  f.normalized = false;
  EXPECT_THROW(infer_heatmap(models::make_pixel_classifier(1), f), DataError);
  f.normalized = true;
  EXPECT_THROW(infer_heatmap(models::make_patch_classifier(1, tiny()), f), ShapeError);
}

TEST(Heatmap, RasterRoundTrip) {
  const auto dir = fs::temp_directory_path() / "wastesite_heatmap_rt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto h = bumps(20, 10, {{5, 5}}, 3, 0.9);
  h.x0 = 40;
  h.valid[3] = 0;
  h.scores[3] = 0;
  write_heatmap(dir / "h", h, GeoTransform::north_up(10, 50, 10));
  EXPECT_EQ(read_heatmap(dir / "h"), h);
  fs::remove_all(dir);
}

TEST(AverageTimesteps, SingleHeatmapIsItself) {
  auto h = bumps(9, 9, {{4, 4}}, 2, 0.8);
  h.valid[0] = 0;
  h.scores[0] = 0;
  const Heatmap one[] = {h};
  EXPECT_EQ(average_timesteps(one), h);
}

TEST(AverageTimesteps, MaskedMean) {
  Heatmap a(2, 1), b(2, 1);
  a.scores = {0.2f, 0.3f};
  b.scores = {0.8f, 0.9f};
  a.valid = {1, 0};
  b.valid = {1, 0};
  const Heatmap ab[] = {a, b};
  const auto m = average_timesteps(ab);
  EXPECT_FLOAT_EQ(m.scores[0], 0.5f);
  EXPECT_EQ(m.valid[1], 0);
  EXPECT_EQ(m.scores[1], 0.0f);

  // valid in 3 of 9 steps: the mean covers only those three
  std::vector<Heatmap> steps(9, Heatmap(1, 1));
  const float vals[] = {0.1f, 0.4f, 0.7f};
  for (int k = 0; k < 9; ++k) steps[k].scores[0] = 0.99f;
  for (int k = 0; k < 3; ++k) {
    steps[2 * k + 1].scores[0] = vals[k];
    steps[2 * k + 1].valid[0] = 1;
  }
  EXPECT_FLOAT_EQ(average_timesteps(steps).scores[0], 0.4f);
}

TEST(AverageTimesteps, PermutationInvariant) {
  CounterRng rng(9);
  std::vector<Heatmap> steps;
  for (int k = 0; k < 5; ++k) {
    Heatmap h(16, 16);
    for (std::size_t i = 0; i < h.pixels(); ++i) {
      h.scores[i] = static_cast<float>(std::pow(rng.uniform(), 8.0));
      h.valid[i] = rng.uniform() < 0.8;
    }
    steps.push_back(h);
  }
  const auto ref = average_timesteps(steps);
  std::vector<int> order(steps.size());
  std::iota(order.begin(), order.end(), 0);
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<Heatmap> perm;
    for (int k : order) perm.push_back(steps[k]);
    ASSERT_EQ(average_timesteps(perm).scores, ref.scores);
  }
}

TEST(AverageTimesteps, Errors) {
  EXPECT_THROW(average_timesteps(std::vector<Heatmap>{}), DataError);
  EXPECT_THROW(average_timesteps(std::vector<Heatmap>{Heatmap(2, 2), Heatmap(2, 3)}), ShapeError);
}

TEST(PatchGrid, LatticeArithmetic) {
  const auto net = models::make_patch_classifier(2, tiny());
  const auto one = infer_patch_grid(net, random_field(28, 28, 1));
  EXPECT_EQ(one.cols * one.rows, 1u);
  const auto g = infer_patch_grid(net, random_field(44, 44, 2));
  ASSERT_EQ(g.cols, 3u);
  ASSERT_EQ(g.rows, 3u);
  EXPECT_EQ(g.stride, 8u);
  EXPECT_EQ(g.x_of(0), 0u);
  EXPECT_EQ(g.x_of(1), 8u);
  EXPECT_EQ(g.x_of(2), 16u);
  for (float s : g.scores) {
    EXPECT_GE(s, 0.0f);
    EXPECT_LE(s, 1.0f);
  }
  EXPECT_THROW(infer_patch_grid(net, random_field(27, 40, 3)), ShapeError);
  EXPECT_EQ(lattice_count(100), 10u);
}

TEST(PatchGrid, ScoresMatchSinglePatchInference) {
  const auto net = models::make_patch_classifier(4, tiny());
  const auto f = random_field(60, 44, 5);
  const auto g = infer_patch_grid(net, f);
  const auto g3 = infer_patch_grid(net, f, 3);
  EXPECT_EQ(g.scores, g3.scores);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      const auto p = data::extract_patch(f, g.x_of(c), g.y_of(r));
      const auto y = net.infer(nn::Tensor<float>({1, 28, 28, 24}, p.values));
      EXPECT_NEAR(g.at(c, r), y[0], 1e-5);
    }
}

TEST(PatchGrid, CoveringCellsContainThePixel) {
  const auto g = grid_44(std::vector<float>(9, 0.0f));
  EXPECT_EQ(g.covering(20, 20).size(), 9u);
  EXPECT_EQ(g.covering(0, 0).size(), 1u);
  EXPECT_EQ(g.covering(10.5, 3).size(), 2u);
  EXPECT_TRUE(g.covering(44, 3).empty());
  EXPECT_TRUE(g.covering(-1, 3).empty());
  // brute-force over the lattice
  for (int y = 0; y < 44; ++y)
    for (int x = 0; x < 44; ++x) {
      std::size_t n = 0;
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) n += 8 * c <= std::size_t(x) && std::size_t(x) < 8 * c + 28 && 8 * r <= std::size_t(y) && std::size_t(y) < 8 * r + 28;
      ASSERT_EQ(g.covering(x + 0.5, y + 0.5).size(), n);
    }
}

TEST(Modes, ConfigHoldsTheThreeTriples) {
  EXPECT_EQ(mode("low"), (SensitivityMode{"low", 0.9, 5.0, 0.6}));
  EXPECT_EQ(mode("med"), (SensitivityMode{"med", 0.6, 5.0, 0.6}));
  EXPECT_EQ(mode("high"), (SensitivityMode{"high", 0.6, 3.5, 0.3}));
  EXPECT_THROW(mode("extreme"), ConfigError);
}

TEST(Modes, ShippedConfigEqualsBuiltIn) {
  EXPECT_EQ(load_config(fs::path(WASTESITE_SOURCE_DIR) / "config" / "default.json"), default_config());
}

TEST(Modes, MissingKeyIsNamed) {
  auto cfg = default_config();
  cfg["detect"]["modes"]["med"].erase("min_sigma");
  try {
    mode_from_config(cfg, "med");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "detect.modes.med.min_sigma");
  }
  cfg["detect"]["modes"]["low"]["pixel_threshold"] = "high";
  EXPECT_THROW(mode_from_config(cfg, "low"), ConfigError);
}

TEST(Blobs, EmptyHeatmapHasNoCandidates) {
  Heatmap h(64, 64);
  EXPECT_TRUE(detect_blobs(h, mode("high")).empty());
}

TEST(Blobs, SingleBumpGivesOneCentredCandidate) {
  const auto h = bumps(96, 96, {{47.5, 40.5}}, 6, 1.0);
  const auto c = detect_blobs(h, mode("med"));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_LE(std::hypot(c[0].pixel.x - 48.0, c[0].pixel.y - 41.0), 2.0);
  EXPECT_GE(c[0].sigma, 5.0);
  EXPECT_GT(c[0].pixel_score, 0.6);
  EXPECT_EQ(c[0].mode, "med");
}

TEST(Blobs, TwoBumpsAndTheLowModeCut) {
  const auto two = bumps(120, 80, {{40, 40}, {80, 40}}, 6, 1.0);
  EXPECT_EQ(detect_blobs(two, mode("med")).size(), 2u);
  const auto dim = bumps(120, 80, {{40, 40}, {80, 40}}, 6, 0.7);
  EXPECT_TRUE(detect_blobs(dim, mode("low")).empty());
}

TEST(Blobs, CentresAreInSceneCoordinates) {
  auto h = bumps(64, 64, {{30, 20}}, 6, 1.0);
  h.x0 = 100;
  h.y0 = 200;
  const auto c = detect_blobs(h, mode("med"), GeoTransform{}, Month(2020, 5));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0].pixel.x, 130.5, 2.0);
  EXPECT_NEAR(c[0].pixel.y, 220.5, 2.0);
  EXPECT_EQ(c[0].geo, (Point{c[0].pixel.x, -c[0].pixel.y}));
  EXPECT_EQ(c[0].id, site_id(c[0].geo, Month(2020, 5)));
  EXPECT_EQ(c[0].id.size(), 15u);
}

TEST(Blobs, AgreesWithComponentOracle) {
  const auto med = mode("med");
  int agree = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    CounterRng rng(1000 + trial);
    const std::size_t k = rng.below(6);
    std::vector<Point> centers;
    while (centers.size() < k) {
      const Point p{rng.uniform(20, 108), rng.uniform(20, 108)};
      if (std::all_of(centers.begin(), centers.end(), [&](Point q) { return std::hypot(p.x - q.x, p.y - q.y) > 40; }))
        centers.push_back(p);
    }
    const double sigma = rng.uniform(5.0, 8.0);
    auto h = bumps(128, 128, centers, sigma, rng.uniform(0.85, 1.0));
    for (auto& s : h.scores) s = std::max(s, static_cast<float>(rng.uniform(0.0, 0.3)));
    std::vector<std::uint8_t> mask(h.pixels());
    for (std::size_t i = 0; i < h.pixels(); ++i) mask[i] = h.scores[i] >= med.pixel_threshold;
    const auto comps = label_components(mask, 128, 128);
    const auto cands = detect_blobs(h, med);
    bool ok = cands.size() == comps.count;
    std::vector<int> hits(comps.count, 0);
    for (const auto& c : cands) {
      const auto lbl = comps.labels[std::size_t(c.pixel.y) * 128 + std::size_t(c.pixel.x)];
      if (lbl) ++hits[lbl - 1];
    }
    ok = ok && std::all_of(hits.begin(), hits.end(), [](int n) { return n == 1; });
    agree += ok;
  }
  EXPECT_GE(agree, 19);
}

TEST(Blobs, RaisingThresholdNeverGrowsMask) {
  CounterRng rng(4);
  Heatmap h(32, 32);
  for (std::size_t i = 0; i < h.pixels(); ++i) {
    h.scores[i] = static_cast<float>(rng.uniform());
    h.valid[i] = 1;
  }
  std::size_t prev = h.pixels() + 1;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const auto img = threshold_heatmap(h, t);
    const auto area = static_cast<std::size_t>(std::count_if(img.begin(), img.end(), [](double v) { return v > 0; }));
    EXPECT_LE(area, prev);
    prev = area;
  }
}

TEST(CrossValidate, Worked) {
  const SensitivityMode m{"x", 0.6, 5.0, 0.6};
  // pixel (2, 2) lies only in cell (0, 0)
  EXPECT_EQ(cross_validate({at(2.5, 2.5)}, grid_44({0.65f, 0, 0, 0, 0, 0, 0, 0, 0}), m).kept.size(), 1u);
  auto cv = cross_validate({at(2.5, 2.5)}, grid_44({0.6f, 0.9f, 0.9f, 0.9f, 0.9f, 0.9f, 0.9f, 0.9f, 0.9f}), m);
  EXPECT_TRUE(cv.kept.empty());
  ASSERT_EQ(cv.dropped.size(), 1u);
  EXPECT_FLOAT_EQ(static_cast<float>(cv.dropped[0].patch_score), 0.6f);
  // pixel (12, 12) lies in cells (0..1, 0..1)
  cv = cross_validate({at(12.5, 12.5)}, grid_44({0.1f, 0.7f, 0.99f, 0.2f, 0.3f, 0.99f, 0.99f, 0.99f, 0.99f}), m);
  ASSERT_EQ(cv.kept.size(), 1u);
  EXPECT_FLOAT_EQ(static_cast<float>(cv.kept[0].patch_score), 0.7f);
}

TEST(CrossValidate, OutputIsSubsetAndUncoveredIsReported) {
  CounterRng rng(2);
  std::vector<float> scores(9);
  for (auto& s : scores) s = static_cast<float>(rng.uniform());
  const auto g = grid_44(scores);
  std::vector<CandidateSite> cs;
  for (int i = 0; i < 30; ++i) cs.push_back(at(rng.uniform(0, 44), rng.uniform(0, 44), "c" + std::to_string(i)));
  cs.push_back(at(50, 10, "outside"));
  const auto cv = cross_validate(cs, g, {"x", 0.6, 5, 0.5});
  EXPECT_EQ(cv.kept.size() + cv.dropped.size() + cv.uncovered.size(), cs.size());
  for (const auto& k : cv.kept)
    EXPECT_TRUE(std::any_of(cs.begin(), cs.end(), [&](const CandidateSite& c) { return c.id == k.id; }));
  ASSERT_EQ(cv.uncovered.size(), 1u);
  EXPECT_EQ(cv.uncovered[0].id, "outside");
  EXPECT_EQ(cv.report.size(), 1u);
}

TEST(Candidates, GeoJsonRoundTrip) {
  CandidateSite c;
  c.pixel = {10.5, 20.5};
  c.geo = {115.2, -8.4};
  c.sigma = 5.0;
  c.pixel_score = 0.8;
  c.patch_score = 0.7;
  c.mode = "high";
  c.month = Month(2020, 3);
  c.id = site_id(c.geo, c.month);
  const auto fc = candidates_geojson({c});
  EXPECT_EQ(fc["features"][0]["properties"]["status"], "candidate");
  EXPECT_EQ(fc["features"][0]["properties"]["blob_sigma"], 5.0);
  EXPECT_EQ(parse_candidates_geojson(nlohmann::json::parse(fc.dump())).at(0), c);
  EXPECT_NE(site_id(c.geo, Month(2020, 4)), c.id);
}

TEST(Pipeline, QuarterlyTimesteps) {
  const auto ms = detection_months(Month(2019, 1), Month(2020, 12), 3);
  ASSERT_EQ(ms.size(), 3u);
  EXPECT_EQ(ms[0], Month(2020, 10));
  EXPECT_EQ(ms[1], Month(2020, 7));
  EXPECT_EQ(ms[2], Month(2020, 4));
  EXPECT_EQ(detection_months(Month(2019, 1), Month(2019, 9), 4).size(), 1u);
  EXPECT_THROW(detection_months(Month(2019, 1), Month(2019, 8), 1), DataError);
}

TEST(Pipeline, ComposesStagesAndPersistsArtifacts) {
  data::SceneSpec spec;
  spec.width = spec.height = 64;
  spec.months = 12;
  spec.seed = 3;
  spec.rivers = 0;
  const auto scene = data::generate_scene(spec);
  auto pixel = models::make_pixel_classifier(1);
  auto patch = models::make_patch_classifier(1, tiny());
  data::NormStats stats;
  stats.mean.fill(0.1);
  stats.stddev.fill(0.1);
  const DetectionModels m{pixel, patch, stats};
  DetectionOptions opt{mode("high"), 2, 2, 2, {}};
  const auto r = run_detection(scene.frames, m, opt, spec.geo);
  ASSERT_EQ(r.months.size(), 2u);
  EXPECT_EQ(r.months[0], scene.last() - 2);
  EXPECT_EQ(r.grid.cols, lattice_count(64));
  EXPECT_EQ(r.averaged.width, 64u);

  const auto dir = fs::temp_directory_path() / "wastesite_detect_run";
  fs::remove_all(dir);
  write_detection(dir, r, spec.geo, opt.mode);
  EXPECT_TRUE(fs::exists(dir / "candidates.geojson"));
  EXPECT_TRUE(fs::exists(dir / "patch_grid.json"));
  EXPECT_TRUE(fs::exists(dir / "heatmaps" / "average.bin"));
  EXPECT_EQ(read_heatmap(dir / "heatmaps" / r.months[0].str()), r.heatmaps[0]);
  EXPECT_EQ(data::read_json(dir / "patch_grid.json").get<PatchScoreGrid>().scores, r.grid.scores);
  fs::remove_all(dir);
}

TEST(Pipeline, StageErrorsCarryTheStageName) {
  data::SceneSpec spec;
  spec.width = spec.height = 32;
  spec.months = 12;
  const auto scene = data::generate_scene(spec);
  const auto wrong = models::make_patch_classifier(1, tiny());
  const auto patch = models::make_patch_classifier(1, tiny());
  data::NormStats stats;
  stats.mean.fill(0.1);
  stats.stddev.fill(0.1);
  try {
    run_detection(scene.frames, {wrong, patch, stats}, {mode("high")});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("pixel inference:", 0), 0u) << e.what();
  }
  std::vector<data::RasterFrame> short_series(scene.frames.begin(), scene.frames.begin() + 6);
  EXPECT_THROW(run_detection(short_series, {wrong, patch, stats}, {mode("high")}), DataError);
}

TEST(Evaluate, PolygonDistance) {
  const auto sq = data::rectangle(10, 10, 4, 4);
  EXPECT_EQ(polygon_distance(sq, {12, 12}), 0.0);
  EXPECT_DOUBLE_EQ(polygon_distance(sq, {17, 12}), 3.0);
  EXPECT_DOUBLE_EQ(polygon_distance(sq, {17, 18}), 5.0);
}

TEST(Evaluate, ScoresSitesAndConfounders) {
  const Month m(2020, 4);
  std::vector<data::PlantedFeature> fs{
      {"a", data::FeatureKind::waste_site, {{m - 12, data::rectangle(10, 10, 6, 6)}}, 1.0, true, 0},
      {"b", data::FeatureKind::waste_site, {{m - 12, data::rectangle(60, 60, 6, 6)}}, 1.0, true, 0},
      {"g", data::FeatureKind::greenhouse, {{m - 12, data::rectangle(100, 10, 8, 8)}}, 1.0, false, 0},
      {"h", data::FeatureKind::greenhouse, {{m - 12, data::rectangle(10, 100, 8, 8)}}, 1.0, false, 0},
      {"later", data::FeatureKind::waste_site, {{m + 3, data::rectangle(120, 120, 6, 6)}}, 1.0, true, 0}};
  auto at = [](double x, double y) {
    CandidateSite c;
    c.pixel = {x, y};
    return c;
  };
  DetectionResult r;
  r.months = {m, m - 3};
  // a: kept; b: flagged only; g: flagged and rejected; h: flagged and kept; one stray keep
  r.blobs = {at(13, 13), at(63, 63), at(104, 14), at(14, 104), at(200, 200)};
  r.validation.kept = {at(13, 13), at(14, 104), at(200, 200)};
  const auto s = score_detection(r, fs);
  EXPECT_EQ(s.sites, 2u);
  EXPECT_EQ(s.sites_found, 1u);
  EXPECT_DOUBLE_EQ(s.recall(), 0.5);
  EXPECT_EQ(s.confounders, 2u);
  EXPECT_EQ(s.confounders_flagged, 2u);
  EXPECT_EQ(s.confounders_rejected, 1u);
  EXPECT_DOUBLE_EQ(s.confounder_rejection(), 0.5);
  EXPECT_EQ(s.kept, 3u);
  EXPECT_EQ(s.kept_on_sites, 1u);
  EXPECT_NEAR(s.precision(), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(nlohmann::json(s)["features"].size(), 4u);

  r.months.clear();
  EXPECT_THROW(score_detection(r, fs), DataError);
}
