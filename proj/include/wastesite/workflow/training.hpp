#pragma once

#include <algorithm>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wastesite/core/config.hpp"
#include "wastesite/core/metrics.hpp"
#include "wastesite/dataengine/dataset.hpp"
#include "wastesite/dataengine/sampling.hpp"
#include "wastesite/dataengine/scene.hpp"
#include "wastesite/detect/pipeline.hpp"
#include "wastesite/distill/soft_targets.hpp"
#include "wastesite/distill/student.hpp"
#include "wastesite/models/architectures.hpp"
#include "wastesite/models/ensemble.hpp"
#include "wastesite/models/inputs.hpp"
#include "wastesite/models/svm.hpp"
#include "wastesite/nn/train.hpp"

// Config-driven glue shared by the command-line tool and the acceptance run.
namespace wastesite::workflow {

inline data::SceneSpec scene_spec_from_config(const nlohmann::json& cfg) {
  const ConfigView root(cfg);
  const auto& j = root.section("scene").json();
  try {
    return j.get<data::SceneSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scene", e.what());
  } catch (const FormatError& e) {
    throw ConfigError("scene.start", e.what());
  }
}

/// Months each scene contributes training data for: the detection months of its series.
inline std::vector<Month> sample_months(const data::Scene& s, const nlohmann::json& cfg) {
  return detect::detection_months(s.first(), s.last(), ConfigView(cfg).section("detect").count("timesteps"));
}

/// Pixel regions from every scene at every sample month.
inline std::vector<data::LabeledRegion> pixel_regions(std::span<const data::Scene> scenes, const nlohmann::json& cfg) {
  auto opt = data::sampling_options_from_config(cfg);
  std::vector<data::LabeledRegion> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const Month t : sample_months(scenes[i], cfg)) {
      opt.seed = CounterRng::mix(scenes[i].spec.seed ^ (std::uint64_t(i) << 32) ^ std::uint64_t(std::int64_t(t.index())));
      auto r = data::scene_pixel_regions(scenes[i], detect::paired_field(scenes[i].frames, t), t, opt,
                                         "s" + std::to_string(i) + "@" + t.str());
      std::move(r.begin(), r.end(), std::back_inserter(out));
    }
  }
  return out;
}

/// Labelled patches from every scene at every sample month; `salt` draws a different set.
inline std::vector<data::PatchTensor> labelled_patches(std::span<const data::Scene> scenes, const data::NormStats& stats,
                                                       const nlohmann::json& cfg, std::uint64_t salt = 0) {
  auto opt = data::sampling_options_from_config(cfg);
  std::vector<data::PatchTensor> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const Month t : sample_months(scenes[i], cfg)) {
      opt.seed = CounterRng::mix(scenes[i].spec.seed ^ (std::uint64_t(i) << 32) ^ std::uint64_t(std::int64_t(t.index())) ^ (salt << 48));
      const auto field = stats.normalized(detect::paired_field(scenes[i].frames, t));
      auto ps = data::scene_patches(scenes[i], field, t, opt, "s" + std::to_string(i) + "@" + t.str() + "#" + std::to_string(salt));
      std::move(ps.begin(), ps.end(), std::back_inserter(out));
    }
  }
  return out;
}

inline nn::TrainConfig train_config(const ConfigView& s, std::uint64_t shuffle_seed) {
  nn::TrainConfig t;
  t.learning_rate = s.number("learning_rate");
  t.batch_size = s.count("batch_size");
  t.epochs = static_cast<int>(s.count("epochs"));
  t.shuffle_seed = shuffle_seed;
  if (!(t.learning_rate > 0.0)) throw ConfigError(s.key("learning_rate"), "must be > 0");
  if (t.batch_size < 1) throw ConfigError(s.key("batch_size"), "must be >= 1");
  return t;
}

inline models::PatchWidths widths_from(const ConfigView& s) {
  const ConfigView w = s.section("widths");
  models::PatchWidths out;
  const auto conv = w.get<std::vector<std::size_t>>("conv");
  const auto dense = w.get<std::vector<std::size_t>>("dense");
  if (conv.size() != 3 || std::count(conv.begin(), conv.end(), 0u)) throw ConfigError(w.key("conv"), "needs 3 positive filter counts");
  if (dense.size() != 2 || std::count(dense.begin(), dense.end(), 0u)) throw ConfigError(w.key("dense"), "needs 2 positive unit counts");
  std::copy(conv.begin(), conv.end(), out.conv);
  std::copy(dense.begin(), dense.end(), out.dense);
  out.dropout = w.number("dropout");
  if (!(out.dropout >= 0.0 && out.dropout < 1.0)) throw ConfigError(w.key("dropout"), "must lie in [0, 1)");
  return out;
}

inline data::PixelDatasetOptions pixel_dataset_options(const nlohmann::json& cfg) {
  const ConfigView p = ConfigView(cfg).section("pixel");
  data::PixelDatasetOptions o;
  o.ndvi_threshold = p.number("ndvi_threshold");
  o.max_negatives = p.count("max_negatives");
  o.seed = p.count("seed");
  return o;
}

struct PixelTraining {
  models::PixelClassifier net;
  data::NormStats stats;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t ndvi_removed = 0;
  std::vector<std::string> warnings;
  nn::TrainHistory history;
};

/// Assembles the pixel dataset from labelled regions, fits the statistics and trains.
inline PixelTraining train_pixel(std::span<const data::LabeledRegion> regions, const nlohmann::json& cfg) {
  const ConfigView p = ConfigView(cfg).section("pixel");
  auto ds = data::assemble_pixel_dataset(regions, pixel_dataset_options(cfg));
  if (ds.positives.empty() || ds.negatives.empty())
    throw DataError("pixel training needs both classes; got " + std::to_string(ds.positives.size()) + " positive and " +
                    std::to_string(ds.negatives.size()) + " negative spectrograms");
  const std::uint64_t seed = p.count("seed");
  PixelTraining out{models::make_pixel_classifier(seed), ds.stats, ds.positives.size(), ds.negatives.size(),
                    ds.ndvi_removed, ds.warnings, {}};
  std::vector<data::Spectrogram> all = std::move(ds.positives);
  all.insert(all.end(), ds.negatives.begin(), ds.negatives.end());
  nn::Tensor<float> y({all.size(), 1});
  for (std::size_t i = 0; i < out.positives; ++i) y[i] = 1.0f;
  out.history = nn::train(out.net, models::spectrogram_batch(all), y, train_config(p, seed));
  return out;
}

inline models::EnsembleConfig ensemble_config(const nlohmann::json& cfg) {
  const ConfigView t = ConfigView(cfg).section("teachers");
  if (t.count("members") != models::kEnsembleSize) throw ConfigError(t.key("members"), "the ensemble has exactly 32 members");
  models::EnsembleConfig e;
  e.seed_base = t.count("seed_base");
  e.train = train_config(t, e.seed_base);
  e.augment = t.get<bool>("augment");
  e.widths = widths_from(t);
  e.workers = std::max<std::size_t>(1, t.count("workers"));
  return e;
}

inline models::SvmConfig svm_config(const nlohmann::json& cfg) {
  const ConfigView s = ConfigView(cfg).section("svm");
  models::SvmConfig c;
  c.C = s.number("C");
  c.gamma = s.number("gamma");
  c.tolerance = s.number("tolerance");
  c.max_iterations = s.count("max_iterations");
  if (!(c.C > 0.0)) throw ConfigError(s.key("C"), "must be > 0");
  if (!(c.tolerance > 0.0)) throw ConfigError(s.key("tolerance"), "must be > 0");
  return c;
}

inline distill::StudentConfig student_config(const nlohmann::json& cfg) {
  const ConfigView d = ConfigView(cfg).section("distill");
  distill::StudentConfig c;
  c.seed = d.count("seed");
  c.train = train_config(d, c.seed);
  c.widths = widths_from(d);
  c.augment = d.get<bool>("augment");
  return c;
}

inline double holdout_fraction(const nlohmann::json& cfg) {
  const ConfigView d = ConfigView(cfg).section("distill");
  const double f = d.number("holdout_fraction");
  if (!(f > 0.0 && f < 1.0)) throw ConfigError(d.key("holdout_fraction"), "must lie in (0, 1)");
  return f;
}

/// Labelled patches split once, seeded by distill.seed, so every stage sees the same halves.
struct LabelledSplit {
  std::vector<data::PatchTensor> train;
  std::vector<data::PatchTensor> holdout;
};

inline LabelledSplit split_labelled(std::span<const data::PatchTensor> ps, const nlohmann::json& cfg) {
  const auto s = distill::stratified_split(ps, holdout_fraction(cfg), ConfigView(cfg).section("distill").count("seed"));
  return {distill::pick<data::PatchTensor>(ps, s.train), distill::pick<data::PatchTensor>(ps, s.holdout)};
}

inline models::RbfSvm train_svm_on(std::span<const data::PatchTensor> ps, const nlohmann::json& cfg) {
  const auto [xs, ys] = distill::svm_training_set(ps);
  return models::train_svm(xs, ys, data::kPatchValues, svm_config(cfg));
}

struct Distillation {
  distill::ModelStats svm_stats;
  distill::ModelStats pixel_stats;
  std::vector<distill::SoftTarget> targets;
  distill::StudentResult student;
  std::optional<ClassMetrics> teacher_test;
  std::optional<ClassMetrics> student_test;
};

/// Rates of the SVM and pixel votes on the holdout, soft targets on the unlabelled pool,
/// then the student on hard + soft labels; both patch models are scored on `test`.
inline Distillation run_distillation(std::span<const data::PatchTensor> train, std::span<const data::PatchTensor> holdout,
                                     std::span<const data::PatchTensor> unlabelled, const models::TeacherEnsemble& teachers,
                                     const models::RbfSvm& svm, const models::PixelClassifier& pixel,
                                     const nlohmann::json& cfg, std::span<const data::PatchTensor> test = {},
                                     std::size_t workers = 1) {
  if (holdout.empty()) throw DataError("distillation needs a labelled holdout split");
  const auto truth = distill::hard_truth(holdout);
  const auto svm_stats = distill::ModelStats::measure(distill::svm_votes(svm, holdout), truth);
  const auto pixel_stats = distill::ModelStats::measure(distill::pixel_votes(pixel, holdout), truth);
  auto targets = distill::build_soft_targets(unlabelled, {teachers, svm, pixel, svm_stats, pixel_stats}, workers);
  const auto soft = distill::attach_soft_targets(unlabelled, targets);
  Distillation d{svm_stats, pixel_stats, std::move(targets), distill::train_student(train, soft, student_config(cfg), holdout), {}, {}};
  if (!test.empty()) {
    d.teacher_test = distill::evaluate(teachers, test);
    d.student_test = distill::evaluate(d.student.net, test);
  }
  return d;
}

}  // namespace wastesite::workflow
