#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "wastesite/core/geometry.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/raster.hpp"
#include "wastesite/dataengine/scene.hpp"
#include "wastesite/dataengine/spectrogram.hpp"

using namespace wastesite;
using namespace wastesite::data;

namespace {

RasterFrame random_frame(std::size_t w, std::size_t h, Month m, CounterRng& rng, double p_mask) {
  RasterFrame f(w, h, m);
  for (auto& b : f.bands)
    for (auto& v : b) v = static_cast<float>(rng.uniform());
  for (auto& k : f.mask) k = rng.uniform() < p_mask;
  return f;
}

// Independent oracle: per pixel/band, scan frames and keep the smallest unmasked value.
void expect_matches_oracle(const std::vector<RasterFrame>& frames, const Composite& c) {
  for (std::size_t i = 0; i < c.pixels(); ++i) {
    bool any = false;
    for (const auto& f : frames) any = any || !f.mask[i];
    ASSERT_EQ(c.valid[i] != 0, any) << "pixel " << i;
    for (std::size_t b = 0; b < kBandCount; ++b) {
      float best = 0.0f;
      bool seen = false;
      for (const auto& f : frames) {
        if (f.mask[i]) continue;
        if (!seen || f.bands[b][i] < best) best = f.bands[b][i];
        seen = true;
      }
      ASSERT_EQ(c.bands[b][i], best) << "pixel " << i << " band " << b;
    }
  }
}

Composite filled_composite(std::size_t w, std::size_t h, Month start, float value) {
  Composite c;
  c.width = w;
  c.height = h;
  c.window = {start, 3};
  for (auto& b : c.bands) b.assign(w * h, value);
  c.valid.assign(w * h, 1);
  return c;
}

}  // namespace

TEST(MinComposite, SingleFrameIsIdentity) {
  CounterRng rng(1);
  std::vector<RasterFrame> frames{random_frame(5, 4, Month(2020, 3), rng, 0.0)};
  const Composite c = min_composite(frames, {Month(2020, 3), 3});
  for (std::size_t b = 0; b < kBandCount; ++b) EXPECT_EQ(c.bands[b], frames[0].bands[b]);
  EXPECT_EQ(c.valid_count(), 20u);
}

TEST(MinComposite, MinimumOverUnmaskedValues) {
  std::vector<RasterFrame> frames;
  const float values[] = {5, 3, 1, 7};
  for (int k = 0; k < 4; ++k) {
    RasterFrame f(1, 1, Month(2020, 1) + k);
    for (auto& b : f.bands) b[0] = values[k];
    f.mask[0] = k == 2;
    frames.push_back(f);
  }
  const Composite c = min_composite(frames, {Month(2020, 1), 4});
  for (std::size_t b = 0; b < kBandCount; ++b) EXPECT_EQ(c.bands[b][0], 3.0f);
}

TEST(MinComposite, AllMaskedPixelIsInvalid) {
  CounterRng rng(2);
  std::vector<RasterFrame> frames;
  for (int k = 0; k < 3; ++k) {
    frames.push_back(random_frame(3, 3, Month(2021, 1) + k, rng, 0.0));
    frames.back().mask[4] = 1;
  }
  const Composite c = min_composite(frames, {Month(2021, 1), 3});
  EXPECT_EQ(c.valid[4], 0);
  EXPECT_EQ(c.valid_count(), 8u);
  EXPECT_EQ(c.bands[0][4], 0.0f);
}

TEST(MinComposite, EmptyWindowListsAvailableTimestamps) {
  CounterRng rng(3);
  std::vector<RasterFrame> frames{random_frame(2, 2, Month(2020, 1), rng, 0.0),
                                  random_frame(2, 2, Month(2020, 2), rng, 0.0)};
  try {
    min_composite(frames, {Month(2022, 1), 3});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2020-01"), std::string::npos);
    EXPECT_NE(msg.find("2020-02"), std::string::npos);
  }
}

TEST(MinComposite, IgnoresFramesOutsideWindow) {
  CounterRng rng(4);
  std::vector<RasterFrame> frames;
  for (int k = 0; k < 6; ++k) frames.push_back(random_frame(4, 4, Month(2020, 1) + k, rng, 0.2));
  const Composite c = min_composite(frames, {Month(2020, 3), 3});
  expect_matches_oracle({frames[2], frames[3], frames[4]}, c);
}

TEST(MinComposite, ExhaustiveOracleOnRandomStacks) {
  CounterRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RasterFrame> frames;
    for (int k = 0; k < 6; ++k) frames.push_back(random_frame(8, 8, Month(2020, 1) + k, rng, 0.5));
    const Composite c = min_composite(frames, {Month(2020, 1), 6});
    expect_matches_oracle(frames, c);
  }
}

TEST(MinComposite, BrighterFrameNeverChangesComposite) {
  CounterRng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RasterFrame> frames;
    for (int k = 0; k < 3; ++k) frames.push_back(random_frame(6, 6, Month(2020, 1) + k, rng, 0.3));
    const Composite before = min_composite(frames, {Month(2020, 1), 3});
    // A hazy copy of an existing frame: every band +delta, unmasked wherever it was.
    RasterFrame hazy = frames[static_cast<std::size_t>(rng.below(3))];
    const auto delta = static_cast<float>(rng.uniform(0.01, 0.2));
    for (auto& b : hazy.bands)
      for (auto& v : b) v += delta;
    frames.push_back(hazy);
    const Composite after = min_composite(frames, {Month(2020, 1), 3});
    for (std::size_t b = 0; b < kBandCount; ++b) EXPECT_EQ(before.bands[b], after.bands[b]);
    EXPECT_EQ(before.valid, after.valid);
  }
}

TEST(Spectrogram, IdenticalCompositesGiveEqualRows) {
  Composite now = filled_composite(3, 3, Month(2020, 7), 0.25f);
  now.bands[5][4] = 0.5f;
  Composite prev = now;
  prev.window.start = Month(2020, 1);
  const auto field = build_spectrogram_field(now, prev);
  for (const auto& s : field.spectrograms())
    for (std::size_t b = 0; b < kBandCount; ++b) EXPECT_EQ(s.at(0, b), s.at(1, b));
}

TEST(Spectrogram, OmitsPixelsInvalidInEitherComposite) {
  Composite now = filled_composite(4, 4, Month(2020, 7), 0.1f);
  Composite prev = filled_composite(4, 4, Month(2020, 1), 0.2f);
  prev.valid[0] = prev.valid[5] = prev.valid[15] = 0;
  const auto field = build_spectrogram_field(now, prev);
  EXPECT_EQ(field.spectrograms().size(), 13u);
  EXPECT_EQ(field.omitted, (std::vector<std::size_t>{0, 5, 15}));
  const auto s = field.spectrogram(1, 0);
  EXPECT_FLOAT_EQ(s.at(0, 0), 0.1f);
  EXPECT_FLOAT_EQ(s.at(1, 0), 0.2f);
}

TEST(Spectrogram, RejectsWrongOffsetAndSizes) {
  const Composite now = filled_composite(4, 4, Month(2020, 7), 0.1f);
  try {
    build_spectrogram_field(now, filled_composite(4, 4, Month(2020, 2), 0.1f));
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2020-07"), std::string::npos);
    EXPECT_NE(msg.find("2020-02"), std::string::npos);
  }
  EXPECT_THROW(build_spectrogram_field(now, filled_composite(4, 5, Month(2020, 1), 0.1f)), ShapeError);
}

TEST(Ndvi, WorkedValues) {
  Spectrogram s;
  s.at(0, kNirBand) = 0.3f;
  s.at(0, kRedBand) = 0.3f;
  EXPECT_EQ(ndvi(s, 0), 0.0);
  EXPECT_EQ(ndvi(s, 1), 0.0);  // NIR + Red = 0
  s.at(0, kNirBand) = 0.7f;
  EXPECT_NEAR(ndvi(s, 0), 0.4, 1e-6);
  EXPECT_FALSE(ndvi(s, 0) > 0.4);
  s.at(0, kNirBand) = 0.9f;
  s.at(0, kRedBand) = 0.1f;
  EXPECT_NEAR(ndvi(s, 0), 0.8, 1e-6);
  EXPECT_EQ(kBandNames[kNirBand], "B8");
  EXPECT_EQ(kBandNames[kRedBand], "B4");
}

TEST(Ndvi, AntisymmetricUnderSwap) {
  CounterRng rng(7);
  for (int i = 0; i < 200; ++i) {
    Spectrogram s;
    s.at(1, kNirBand) = static_cast<float>(rng.uniform());
    s.at(1, kRedBand) = static_cast<float>(rng.uniform());
    Spectrogram t = s;
    std::swap(t.at(1, kNirBand), t.at(1, kRedBand));
    EXPECT_EQ(ndvi(s, 1), -ndvi(t, 1));
  }
}

TEST(NormStats, RoundTripAndZScores) {
  CounterRng rng(8);
  std::vector<Spectrogram> xs(500);
  for (auto& s : xs)
    for (std::size_t i = 0; i < kSpectrogramSize; ++i) s.values[i] = static_cast<float>(rng.uniform(0.0, 0.5) + 0.02 * static_cast<double>(i % 12));
  const NormStats st = NormStats::fit(xs);
  for (const auto& s : xs) {
    auto v = s.values;
    st.normalize(v);
    st.denormalize(v);
    for (std::size_t i = 0; i < kSpectrogramSize; ++i) EXPECT_NEAR(v[i], s.values[i], 1e-6);
  }
  nlohmann::json j = st;
  EXPECT_EQ(j.get<NormStats>(), st);
}

TEST(NormStats, ZeroVarianceBandIsAnError) {
  std::vector<Spectrogram> xs(3);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < kSpectrogramSize; ++i) xs[k].values[i] = i == 4 || i == 16 ? 0.5f : static_cast<float>(k);
  EXPECT_THROW(NormStats::fit(xs), DataError);
}

namespace {

SpectrogramField raw_field(std::size_t w, std::size_t h, CounterRng& rng) {
  SpectrogramField f;
  f.width = w;
  f.height = h;
  f.values.resize(w * h * kSpectrogramSize);
  f.valid.assign(w * h, 1);
  for (auto& v : f.values) v = static_cast<float>(rng.uniform(0.05, 0.3));
  // Keep |NDVI| <= 0.25 unless a test raises it.
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t r = 0; r < 2; ++r) {
      f.values[i * kSpectrogramSize + r * kBandCount + kNirBand] = static_cast<float>(rng.uniform(0.15, 0.25));
      f.values[i * kSpectrogramSize + r * kBandCount + kRedBand] = static_cast<float>(rng.uniform(0.15, 0.25));
    }
  return f;
}

}  // namespace

TEST(PixelDataset, NdviFilterCountsAndIntegrity) {
  CounterRng rng(9);
  LabeledRegion pos{"p0", raw_field(10, 10, rng), PatchClass::positive, {rectangle(0, 0, 10, 10)}};
  // 20 vegetated pixels: 10 on row 0, 10 on row 1.
  for (std::size_t k = 0; k < 20; ++k) {
    const std::size_t row = k < 10 ? 0 : 1;
    auto px = pos.field.pixel(k % 10, k / 10 * 3);
    px[row * kBandCount + kNirBand] = 0.9f;
    px[row * kBandCount + kRedBand] = 0.1f;
  }
  LabeledRegion neg{"n0", raw_field(8, 8, rng), PatchClass::negative, {}};
  std::vector<LabeledRegion> regions{pos, neg};
  const PixelDataset ds = assemble_pixel_dataset(regions);
  EXPECT_EQ(ds.positives.size(), 80u);
  EXPECT_EQ(ds.ndvi_removed, 20u);
  EXPECT_EQ(ds.negatives.size(), 64u);
  EXPECT_TRUE(ds.warnings.empty());
  for (const auto& s : ds.positives) {
    Spectrogram raw = s;
    ds.stats.denormalize(raw.values);
    raw.normalized = false;
    EXPECT_LE(ndvi(raw, 0), 0.4 + 1e-6);
    EXPECT_LE(ndvi(raw, 1), 0.4 + 1e-6);
  }
}

TEST(PixelDataset, NormalizedSetHasZeroMeanUnitStd) {
  CounterRng rng(10);
  std::vector<LabeledRegion> regions{
      {"p", raw_field(12, 12, rng), PatchClass::positive, {rectangle(2, 2, 8, 8)}},
      {"n", raw_field(12, 12, rng), PatchClass::negative, {}}};
  const PixelDataset ds = assemble_pixel_dataset(regions);
  std::vector<Spectrogram> all = ds.positives;
  all.insert(all.end(), ds.negatives.begin(), ds.negatives.end());
  for (std::size_t b = 0; b < kBandCount; ++b) {
    double sum = 0, sq = 0;
    for (const auto& s : all)
      for (std::size_t r = 0; r < 2; ++r) sum += s.at(r, b);
    const double n = 2.0 * static_cast<double>(all.size());
    const double mean = sum / n;
    for (const auto& s : all)
      for (std::size_t r = 0; r < 2; ++r) sq += (s.at(r, b) - mean) * (s.at(r, b) - mean);
    EXPECT_NEAR(mean, 0.0, 1e-6) << "band " << b;
    EXPECT_NEAR(std::sqrt(sq / n), 1.0, 1e-6) << "band " << b;
  }
}

TEST(PixelDataset, EmptyPolygonWarnsWithoutFailing) {
  CounterRng rng(11);
  // A sliver that contains no pixel center.
  LabeledRegion pos{"sliver", raw_field(6, 6, rng), PatchClass::positive,
                    {Polygon{{{1.1, 1.1}, {1.4, 1.1}, {1.4, 1.4}}, {}}}};
  std::vector<LabeledRegion> regions{pos, {"n", raw_field(4, 4, rng), PatchClass::negative, {}}};
  const PixelDataset ds = assemble_pixel_dataset(regions);
  EXPECT_TRUE(ds.positives.empty());
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("sliver"), std::string::npos);
}

TEST(PixelDataset, PolygonOutsideRegionIsRejected) {
  CounterRng rng(12);
  std::vector<LabeledRegion> regions{{"p", raw_field(6, 6, rng), PatchClass::positive, {rectangle(2, 2, 8, 3)}}};
  EXPECT_THROW(assemble_pixel_dataset(regions), DataError);
}

TEST(Rasterize, MatchesPointInPolygonOracle) {
  CounterRng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    Polygon p = star_polygon({16.0 + rng.uniform(-4, 4), 16.0 + rng.uniform(-4, 4)}, rng.uniform(3, 12), rng,
                             static_cast<int>(5 + rng.below(10)));
    if (trial % 3 == 0) p.holes.push_back(scaled(p, 0.4).outer);
    const auto mask = rasterize(p, 32, 32);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        ASSERT_EQ(mask[y * 32 + x] != 0, contains(p, {x + 0.5, y + 0.5})) << trial << " @" << x << "," << y;
  }
}

TEST(Patch, ExtractCopiesChannelsInOrder) {
  CounterRng rng(14);
  SpectrogramField f = raw_field(40, 30, rng);
  const PatchTensor p = extract_patch(f, 5, 2);
  ASSERT_EQ(p.values.size(), 28u * 28u * 24u);
  const auto src = f.pixel(5 + 3, 2 + 7);
  for (std::size_t c = 0; c < 24; ++c) EXPECT_EQ(p.values[(7 * 28 + 3) * 24 + c], src[c]);
  EXPECT_THROW(extract_patch(f, 13, 0), ShapeError);
}

// ---- scene generator ----

namespace {

SceneSpec quiet_spec() {
  SceneSpec s;
  s.width = 96;
  s.height = 96;
  s.months = 12;
  s.seed = 42;
  s.noise = 0.0;
  s.cloud_fraction = 0.0;
  s.haze_probability = 0.0;
  s.rivers = 0;
  return s;
}

}  // namespace

TEST(Scene, NoiselessSiteMatchesSignature) {
  SceneSpec spec = quiet_spec();
  PlantedFeature site;
  site.id = "a";
  site.phases.push_back({spec.start, rectangle(40, 40, 12, 10)});
  spec.features.push_back(site);
  const Scene scene = generate_scene(spec);
  const auto mask = rasterize(site.phases[0].polygon, 96, 96);
  EXPECT_EQ(std::count(mask.begin(), mask.end(), 1), 120);
  for (const auto& f : scene.frames)
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i])
        for (std::size_t b = 0; b < kBandCount; ++b) ASSERT_EQ(f.bands[b][i], signature::waste[b]);
}

TEST(Scene, DeterministicPerSeed) {
  SceneSpec spec = quiet_spec();
  spec.noise = 0.01;
  spec.cloud_fraction = 0.2;
  spec.haze_probability = 0.5;
  spec.random_sites = 2;
  spec.random_confounders = 1;
  spec.rivers = 1;
  spec.months = 4;
  spec.min_separation = 30;
  const Scene a = generate_scene(spec);
  const Scene b = generate_scene(spec);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    EXPECT_EQ(a.frames[k].bands, b.frames[k].bands);
    EXPECT_EQ(a.frames[k].mask, b.frames[k].mask);
  }
  spec.seed = 43;
  const Scene c = generate_scene(spec);
  EXPECT_NE(a.frames[0].bands[0], c.frames[0].bands[0]);
}

TEST(Scene, CloudFractionPerFrame) {
  SceneSpec spec = quiet_spec();
  spec.cloud_fraction = 0.3;
  spec.months = 10;
  const Scene scene = generate_scene(spec);
  for (const auto& f : scene.frames) {
    const double frac = static_cast<double>(std::count(f.mask.begin(), f.mask.end(), 1)) / static_cast<double>(f.pixels());
    EXPECT_NEAR(frac, 0.3, 0.05);
  }
}

TEST(Scene, VegetationChangesBetweenPairedWindows) {
  SceneSpec spec = quiet_spec();
  spec.cell_size = 1000;  // few large cells
  const Scene scene = generate_scene(spec);
  std::size_t veg = 0, changed = 0;
  for (std::size_t i = 0; i < scene.landcover.size(); ++i) {
    if (scene.landcover[i] != static_cast<std::uint8_t>(LandCover::vegetation)) continue;
    ++veg;
    const double a = scene.frames[0].bands[kNirBand][i];
    const double b = scene.frames[6].bands[kNirBand][i];
    changed += std::abs(a - b) > 0.01;
  }
  if (veg > 0) EXPECT_GT(changed, veg / 2);
}

TEST(Scene, RejectsOverlapAndOutOfBounds) {
  SceneSpec spec = quiet_spec();
  PlantedFeature a{"a", FeatureKind::waste_site, {{spec.start, rectangle(10, 10, 10, 10)}}};
  PlantedFeature b{"b", FeatureKind::waste_site, {{spec.start, rectangle(15, 15, 10, 10)}}};
  spec.features = {a, b};
  try {
    generate_scene(spec);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("overlap"), std::string::npos);
  }
  spec.features = {PlantedFeature{"c", FeatureKind::waste_site, {{spec.start, rectangle(90, 10, 10, 10)}}}};
  EXPECT_THROW(generate_scene(spec), DataError);
}

TEST(Scene, PhasesShrinkAndScar) {
  SceneSpec spec = quiet_spec();
  PlantedFeature site{"s", FeatureKind::waste_site, {}};
  site.phases.push_back({spec.start, rectangle(30, 30, 20, 20)});
  site.phases.push_back({spec.start + 6, rectangle(30, 30, 20, 8)});
  spec.features = {site};
  const Scene scene = generate_scene(spec);
  const std::size_t inside = 35 * 96 + 35;
  const std::size_t vacated = 45 * 96 + 35;
  EXPECT_EQ(scene.frames[7].bands[0][inside], signature::waste[0]);
  EXPECT_EQ(scene.frames[5].bands[0][vacated], signature::waste[0]);
  EXPECT_EQ(scene.frames[7].bands[0][vacated], signature::scar[0]);
}

TEST(Scene, GreenhouseStripesFollowPeriodThree) {
  SceneSpec spec = quiet_spec();
  PlantedFeature g{"g", FeatureKind::greenhouse, {{spec.start, rectangle(20, 20, 18, 18)}}};
  spec.features = {g};
  const auto mask = feature_mask(g, spec.start, 96, 96);
  for (std::size_t x = 20; x < 38; ++x) EXPECT_EQ(mask[25 * 96 + x] != 0, (x - 20) % 3 != 2) << x;
}

TEST(Scene, RoundTripsThroughDisk) {
  SceneSpec spec = quiet_spec();
  spec.noise = 0.01;
  spec.cloud_fraction = 0.1;
  spec.months = 3;
  spec.random_sites = 2;
  spec.random_confounders = 1;
  spec.min_separation = 30;
  spec.rivers = 1;
  const Scene a = generate_scene(spec);
  const auto dir = std::filesystem::temp_directory_path() / "wastesite_scene_rt";
  std::filesystem::remove_all(dir);
  write_scene(dir, a);
  const Scene b = read_scene(dir);
  ASSERT_EQ(b.frames.size(), a.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    EXPECT_EQ(a.frames[k].timestamp, b.frames[k].timestamp);
    EXPECT_EQ(a.frames[k].bands, b.frames[k].bands);
    EXPECT_EQ(a.frames[k].mask, b.frames[k].mask);
  }
  EXPECT_EQ(a.landcover, b.landcover);
  ASSERT_EQ(a.features.size(), b.features.size());
  for (std::size_t k = 0; k < a.features.size(); ++k) {
    EXPECT_EQ(a.features[k].id, b.features[k].id);
    EXPECT_EQ(rasterize(a.features[k].phases[0].polygon, 96, 96), rasterize(b.features[k].phases[0].polygon, 96, 96));
  }
  ASSERT_EQ(a.waterways.size(), b.waterways.size());
  EXPECT_NEAR(a.waterways[0].line[1].y, b.waterways[0].line[1].y, 1e-6);
  std::filesystem::remove_all(dir);
}

TEST(RasterFile, RejectsTruncatedData) {
  const auto base = std::filesystem::temp_directory_path() / "wastesite_raster_trunc";
  RasterFile r;
  r.width = 3;
  r.height = 2;
  r.planes.emplace_back("x", std::vector<float>{1, 2, 3, 4, 5, 6});
  write_raster(base, r);
  EXPECT_EQ(read_raster(base).plane("x"), r.planes[0].second);
  std::filesystem::resize_file(base.string() + ".bin", 20);
  EXPECT_THROW(read_raster(base), FormatError);
}
