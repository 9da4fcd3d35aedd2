#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/labels.hpp"
#include "wastesite/detect/evaluate.hpp"
#include "wastesite/models/bundle.hpp"
#include "wastesite/monitor/footprint.hpp"
#include "wastesite/monitor/waterway.hpp"
#include "wastesite/server/api.hpp"
#include "wastesite/server/store.hpp"
#include "wastesite/workflow/training.hpp"

namespace fs = std::filesystem;
using namespace wastesite;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

struct Common {
  std::string config_path;
  std::string out;
  std::string mode = "high";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> scenes;
  std::string models;
  std::string store;
  std::string labels;
  std::string candidates;
  std::string test_scene;
  std::string host;
  int port = -1;
  std::size_t workers = 0;
};

json load(const Common& c) { return c.config_path.empty() ? default_config() : load_config(c.config_path); }

std::vector<data::Scene> read_scenes(const std::vector<std::string>& dirs) {
  if (dirs.empty()) throw DataError("no --scene given");
  std::vector<data::Scene> out;
  for (const auto& d : dirs) out.push_back(data::read_scene(d));
  return out;
}

json run_info(const std::string& command, const json& cfg, json seeds) {
  return {{"command", command},
          {"version", WASTESITE_VERSION},
          {"config_hash", config_hash(cfg)},
          {"seeds", std::move(seeds)},
          {"created", server::utc_now()}};
}

/// Manifest for runs whose output directory is not a model bundle.
void write_manifest(const fs::path& dir, const json& info, json outputs) {
  fs::create_directories(dir);
  json m = info;
  m["outputs"] = std::move(outputs);
  data::write_json(dir / "manifest.json", m);
}

const data::NormStats& need_stats(const models::ModelBundle& b, const fs::path& dir) {
  if (!b.stats) throw DataError("bundle " + dir.string() + " has no norm_stats.json; run train-pixel first");
  return *b.stats;
}

template <class T>
const T& need(const std::optional<T>& v, const std::string& what, const fs::path& dir) {
  if (!v) throw DataError("bundle " + dir.string() + " has no " + what);
  return *v;
}

void print(const json& j) { std::cout << j.dump(1) << "\n"; }

std::string need_out(const Common& c) {
  if (c.out.empty()) throw DataError("--out is required");
  return c.out;
}

int gen_scene(const Common& c) {
  auto cfg = load(c);
  if (c.seed) cfg["scene"]["seed"] = *c.seed;
  const auto spec = workflow::scene_spec_from_config(cfg);
  const auto scene = data::generate_scene(spec);
  const fs::path out = need_out(c);
  data::write_scene(out, scene);
  std::size_t sites = 0, greenhouses = 0;
  for (const auto& f : scene.features) (f.kind == data::FeatureKind::waste_site ? sites : greenhouses)++;
  write_manifest(out, run_info("gen-scene", cfg, {{"scene", spec.seed}}),
                 {{"scene", "scene.json"}, {"truth", "truth.geojson"}, {"waterways", "waterways.geojson"}});
  print({{"scene", out.string()}, {"frames", scene.frames.size()}, {"sites", sites}, {"greenhouses", greenhouses}});
  return 0;
}

/// Reviewed sites lying inside the scene, as extra pixel regions at its latest month.
std::vector<data::LabeledRegion> review_regions(const std::string& path, const data::Scene& s, const json& cfg) {
  std::vector<data::LabelRecord> inside;
  for (auto& l : data::read_label_store(path)) {
    const Point p = s.spec.geo.to_pixel(l.location);
    if (p.x >= 0 && p.y >= 0 && p.x < double(s.spec.width) && p.y < double(s.spec.height)) inside.push_back(std::move(l));
  }
  const Month t = workflow::sample_months(s, cfg).front();
  return data::regions_from_labels(inside, detect::paired_field(s.frames, t), s.spec.geo);
}

int train_pixel(const Common& c) {
  auto cfg = load(c);
  if (c.seed) cfg["pixel"]["seed"] = *c.seed;
  const fs::path out = need_out(c);
  const auto scenes = read_scenes(c.scenes);
  auto regions = workflow::pixel_regions(scenes, cfg);
  std::size_t reviewed = 0;
  if (!c.labels.empty()) {
    auto extra = review_regions(c.labels, scenes.front(), cfg);
    reviewed = extra.size();
    std::move(extra.begin(), extra.end(), std::back_inserter(regions));
  }
  const auto t = workflow::train_pixel(regions, cfg);
  for (const auto& w : t.warnings) std::cerr << "warning: " << w << "\n";
  models::save_stats(out, t.stats);
  models::save_pixel(out, t.net);
  json info = run_info("train-pixel", cfg, {{"pixel", cfg["pixel"]["seed"]}});
  info["samples"] = {{"positive", t.positives}, {"negative", t.negatives}, {"ndvi_removed", t.ndvi_removed},
                     {"review_regions", reviewed}};
  info["final_loss"] = t.history.loss.empty() ? 0.0 : t.history.loss.back();
  models::record_component(out, "pixel", info);
  print(info["samples"]);
  return 0;
}

int train_teachers(const Common& c) {
  auto cfg = load(c);
  if (c.seed) cfg["teachers"]["seed_base"] = *c.seed;
  if (c.workers) cfg["teachers"]["workers"] = c.workers;
  const fs::path dir = c.models.empty() ? need_out(c) : c.models;
  const auto bundle = models::load_bundle(dir);
  const auto scenes = read_scenes(c.scenes);
  const auto split = workflow::split_labelled(workflow::labelled_patches(scenes, need_stats(bundle, dir), cfg), cfg);
  const auto ens = models::train_teacher_ensemble(split.train, workflow::ensemble_config(cfg));
  models::save_teachers(dir, ens);
  json info = run_info("train-teachers", cfg, {{"seed_base", cfg["teachers"]["seed_base"]}, {"split", cfg["distill"]["seed"]}});
  info["holdout"] = distill::evaluate(ens, split.holdout);
  info["train_patches"] = split.train.size();
  models::record_component(dir, "teachers", info);
  print(info["holdout"]);
  return 0;
}

int train_svm(const Common& c) {
  auto cfg = load(c);
  if (c.seed) cfg["distill"]["seed"] = *c.seed;
  const fs::path dir = c.models.empty() ? need_out(c) : c.models;
  const auto bundle = models::load_bundle(dir);
  const auto scenes = read_scenes(c.scenes);
  const auto split = workflow::split_labelled(workflow::labelled_patches(scenes, need_stats(bundle, dir), cfg), cfg);
  const auto svm = workflow::train_svm_on(split.train, cfg);
  models::save_svm(dir, svm);
  json info = run_info("train-svm", cfg, {{"split", cfg["distill"]["seed"]}});
  info["support_vectors"] = svm.alpha.size();
  info["train_patches"] = split.train.size();
  models::record_component(dir, "svm", info);
  print({{"support_vectors", svm.alpha.size()}});
  return 0;
}

int run_distill(const Common& c) {
  auto cfg = load(c);
  if (c.seed) cfg["distill"]["seed"] = *c.seed;
  const fs::path dir = c.models.empty() ? need_out(c) : c.models;
  const auto b = models::load_bundle(dir);
  const auto& stats = need_stats(b, dir);
  const auto scenes = read_scenes(c.scenes);
  const auto split = workflow::split_labelled(workflow::labelled_patches(scenes, stats, cfg), cfg);
  const auto pool = data::strip_labels(workflow::labelled_patches(scenes, stats, cfg, 1));
  std::vector<data::PatchTensor> test;
  if (!c.test_scene.empty()) {
    const std::vector<data::Scene> ts{data::read_scene(c.test_scene)};
    test = workflow::labelled_patches(ts, stats, cfg, 2);
  }
  const auto d = workflow::run_distillation(split.train, split.holdout, pool, need(b.teachers, "teachers", dir),
                                            need(b.svm, "svm", dir), need(b.pixel, "pixel classifier", dir), cfg, test,
                                            std::max<std::size_t>(1, c.workers));
  models::save_student(dir, d.student.net);
  json info = run_info("distill", cfg, {{"distill", cfg["distill"]["seed"]}});
  info["svm_rates"] = {{"tpr", d.svm_stats.tpr}, {"fpr", d.svm_stats.fpr}};
  info["pixel_rates"] = {{"tpr", d.pixel_stats.tpr}, {"fpr", d.pixel_stats.fpr}};
  info["soft_targets"] = d.targets.size();
  if (d.teacher_test) info["test"] = {{"teachers", *d.teacher_test}, {"student", *d.student_test}};
  models::record_component(dir, "student", info);
  print(info.contains("test") ? info["test"] : info["soft_targets"]);
  return 0;
}

detect::DetectionOptions detection_options(const json& cfg, const Common& c) {
  const ConfigView d = ConfigView(cfg).section("detect");
  detect::DetectionOptions o{detect::mode_from_config(cfg, c.mode), d.count("timesteps"), d.count("tiles"),
                             std::max<std::size_t>(1, c.workers ? c.workers : d.count("workers")),
                             detect::blob_params_from_config(cfg)};
  return o;
}

detect::DetectionResult detect_scene(const data::Scene& s, const models::ModelBundle& b, const std::string& dir,
                                     const detect::DetectionOptions& opt) {
  return detect::run_detection(s.frames, {need(b.pixel, "pixel classifier", dir), need(b.student, "student", dir), need_stats(b, dir)},
                               opt, s.spec.geo);
}

int run_detect(const Common& c) {
  const auto cfg = load(c);
  if (c.models.empty()) throw DataError("--models is required");
  const fs::path out = need_out(c);
  const auto scene = read_scenes(c.scenes).front();
  const auto b = models::load_bundle(c.models);
  const auto opt = detection_options(cfg, c);
  const auto r = detect_scene(scene, b, c.models, opt);
  detect::write_detection(out, r, scene.spec.geo, opt.mode);
  std::size_t added = 0;
  if (!c.store.empty()) added = server::SiteStore(c.store).add_candidates(r.candidates());
  for (const auto& line : r.report) std::cerr << line << "\n";
  write_manifest(out, run_info("detect", cfg, json::object()),
                 {{"candidates", "candidates.geojson"}, {"summary", "detection.json"}, {"heatmaps", "heatmaps/"}});
  print({{"mode", c.mode}, {"blobs", r.blobs.size()}, {"candidates", r.candidates().size()}, {"stored", added}});
  return 0;
}

/// Window watched for a candidate: 64 px around the centre, clamped to the scene.
monitor::Region watch_region(const detect::CandidateSite& s, std::size_t w, std::size_t h, std::size_t side = 64) {
  side = std::min({side, w, h});
  auto origin = [&](double c, std::size_t limit) {
    return static_cast<std::size_t>(std::clamp(std::floor(c - double(side) / 2), 0.0, double(limit - side)));
  };
  return {origin(s.pixel.x, w), origin(s.pixel.y, h), side, side};
}

int run_monitor(const Common& c) {
  const auto cfg = load(c);
  if (c.models.empty()) throw DataError("--models is required");
  if (c.candidates.empty()) throw DataError("--candidates is required");
  const fs::path out = need_out(c);
  const auto scene = read_scenes(c.scenes).front();
  const auto b = models::load_bundle(c.models);
  const auto opt = monitor::monitor_options_from_config(cfg);
  const double mpp = ConfigView(cfg).section("monitor").number("meters_per_pixel");
  const auto sites = detect::parse_candidates_geojson(data::read_json(c.candidates));
  const auto water = monitor::WaterwaySet::from_scene(scene.waterways, mpp);
  std::optional<server::SiteStore> store;
  if (!c.store.empty()) store.emplace(c.store);
  fs::create_directories(out / "contours");
  json summary = json::array();
  for (const auto& s : sites) {
    const auto series = monitor::monthly_heatmaps(scene.frames, watch_region(s, scene.spec.width, scene.spec.height),
                                                  need(b.pixel, "pixel classifier", c.models), need_stats(b, c.models));
    const auto fp = monitor::footprint_series(s.id, series, opt);
    const auto fc = monitor::contours_geojson(fp, scene.spec.geo);
    data::write_json(out / "contours" / (s.id + ".geojson"), fc);
    json row = {{"site_id", s.id}, {"months", fp.records.size()}, {"gaps", series.gaps.size()}};
    if (const auto a = monitor::area_series(fp); a.mean) row["mean_area_ha"] = *a.mean;
    std::optional<monitor::WaterwayDistance> d;
    if (!water.empty()) {
      d = monitor::distance_to_waterway({s.pixel.x * mpp, s.pixel.y * mpp}, water);
      row["waterway"] = {{"meters", d->meters}, {"tag", d->tag}, {"name", d->name}};
    }
    if (store) {
      store->attach_contours(s.id, fc);
      if (d) store->set_waterway(s.id, *d);
    }
    summary.push_back(std::move(row));
  }
  data::write_json(out / "monitor.json", summary);
  write_manifest(out, run_info("monitor", cfg, json::object()), {{"summary", "monitor.json"}, {"contours", "contours/"}});
  print({{"sites", sites.size()}});
  return 0;
}

int run_eval(const Common& c) {
  const auto cfg = load(c);
  if (c.models.empty()) throw DataError("--models is required");
  const fs::path out = need_out(c);
  const auto scene = read_scenes(c.scenes).front();
  const auto b = models::load_bundle(c.models);
  const auto opt = detection_options(cfg, c);
  const auto started = std::chrono::steady_clock::now();
  const auto r = detect_scene(scene, b, c.models, opt);
  json report = detect::score_detection(r, scene.features);
  report["mode"] = c.mode;
  report["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (b.teachers && b.student) {
    const std::vector<data::Scene> ts{scene};
    const auto patches = workflow::labelled_patches(ts, *b.stats, cfg, 2);
    report["patches"] = {{"teachers", distill::evaluate(*b.teachers, patches)},
                         {"student", distill::evaluate(*b.student, patches)},
                         {"count", patches.size()}};
  }
  fs::create_directories(out);
  data::write_json(out / "eval.json", report);
  write_manifest(out, run_info("eval", cfg, json::object()), {{"report", "eval.json"}});
  print({{"precision", report["precision"]}, {"recall", report["recall"]},
         {"confounder_rejection", report["confounder_rejection"]}});
  return 0;
}

int serve(const Common& c) {
  const auto cfg = load(c);
  const ConfigView s = ConfigView(cfg).section("server");
  const std::string dir = c.store.empty() ? s.get<std::string>("store") : c.store;
  const std::string host = c.host.empty() ? s.get<std::string>("host") : c.host;
  const int port = c.port >= 0 ? c.port : static_cast<int>(s.count("port"));
  server::SiteStore store(dir);
  httplib::Server srv;
  server::mount_api(srv, store);
  std::cerr << "serving " << dir << " on http://" << host << ":" << port << "\n";
  if (!srv.listen(host, port)) throw DataError("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Waste-site detection: scenes, training, detection, monitoring and review service"};
  app.set_version_flag("--version", std::string(WASTESITE_VERSION));
  app.require_subcommand(1);
  Common c;
  app.add_option("--config", c.config_path, "JSON config; built-in defaults when omitted")->check(CLI::ExistingFile);

  auto scene_opt = [&](CLI::App* s, bool many) {
    auto* o = s->add_option("--scene", c.scenes, many ? "scene directory (repeatable)" : "scene directory")->required();
    if (!many) o->expected(1);
  };
  auto seed_opt = [&](CLI::App* s) { s->add_option("--seed", c.seed, "override the stage seed"); };
  auto out_opt = [&](CLI::App* s, bool required) {
    auto* o = s->add_option("--out", c.out, "output directory");
    if (required) o->required();
  };
  auto mode_opt = [&](CLI::App* s) {
    s->add_option("--mode", c.mode, "sensitivity mode")->check(CLI::IsMember({"low", "med", "high"}));
  };
  auto workers_opt = [&](CLI::App* s) { s->add_option("--workers", c.workers, "worker threads"); };

  std::vector<std::pair<CLI::App*, int (*)(const Common&)>> commands;
  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene with planted sites");
  out_opt(gen, true);
  seed_opt(gen);
  commands.emplace_back(gen, gen_scene);

  auto* tp = app.add_subcommand("train-pixel", "train the pixel classifier and fit band statistics");
  scene_opt(tp, true);
  out_opt(tp, true);
  seed_opt(tp);
  tp->add_option("--labels", c.labels, "review label store (labels.jsonl) applied to the first scene");
  commands.emplace_back(tp, train_pixel);

  auto* tt = app.add_subcommand("train-teachers", "train the 32-member patch ensemble");
  scene_opt(tt, true);
  tt->add_option("--models", c.models, "model bundle");
  out_opt(tt, false);
  seed_opt(tt);
  workers_opt(tt);
  commands.emplace_back(tt, train_teachers);

  auto* ts = app.add_subcommand("train-svm", "train the RBF SVM on flattened patches");
  scene_opt(ts, true);
  ts->add_option("--models", c.models, "model bundle");
  out_opt(ts, false);
  seed_opt(ts);
  commands.emplace_back(ts, train_svm);

  auto* di = app.add_subcommand("distill", "soft targets from the fused models, then the student");
  scene_opt(di, true);
  di->add_option("--models", c.models, "model bundle");
  di->add_option("--test-scene", c.test_scene, "scene scored for teacher and student f1");
  out_opt(di, false);
  seed_opt(di);
  workers_opt(di);
  commands.emplace_back(di, run_distill);

  auto* de = app.add_subcommand("detect", "candidate sites and heatmaps for a scene");
  scene_opt(de, false);
  de->add_option("--models", c.models, "model bundle")->required();
  de->add_option("--store", c.store, "site store receiving the candidates");
  out_opt(de, true);
  mode_opt(de);
  workers_opt(de);
  commands.emplace_back(de, run_detect);

  auto* mo = app.add_subcommand("monitor", "monthly footprints and waterway distance per candidate");
  scene_opt(mo, false);
  mo->add_option("--models", c.models, "model bundle")->required();
  mo->add_option("--candidates", c.candidates, "candidates.geojson from detect")->required();
  mo->add_option("--store", c.store, "site store receiving contours and distances");
  out_opt(mo, true);
  commands.emplace_back(mo, run_monitor);

  auto* sv = app.add_subcommand("serve", "HTTP API over a site store");
  sv->add_option("--store", c.store, "store directory (default: server.store)");
  sv->add_option("--host", c.host, "bind address (default: server.host)");
  sv->add_option("--port", c.port, "port (default: server.port)");
  commands.emplace_back(sv, serve);

  auto* ev = app.add_subcommand("eval", "detect on a scene with planted truth and score it");
  scene_opt(ev, false);
  ev->add_option("--models", c.models, "model bundle")->required();
  out_opt(ev, true);
  mode_opt(ev);
  workers_opt(ev);
  commands.emplace_back(ev, run_eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }
  try {
    for (const auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(c);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
