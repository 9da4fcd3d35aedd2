#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "wastesite/core/error.hpp"
#include "wastesite/dataengine/io.hpp"
#include "wastesite/dataengine/spectrogram.hpp"
#include "wastesite/models/architectures.hpp"
#include "wastesite/models/ensemble.hpp"
#include "wastesite/models/svm.hpp"
#include "wastesite/nn/weights_io.hpp"

namespace wastesite::models {

namespace fs = std::filesystem;

// Bundle directory layout:
//   manifest.json        format, version, per-component seeds and config hashes
//   norm_stats.json      per-band mean/std shared by every model
//   pixel.wsnn           pixel spectrogram classifier
//   teachers/teacher-NN.wsnn  32 ensemble members
//   svm.wssv             RBF SVM
//   student.wsnn         distilled patch classifier
inline constexpr int kBundleVersion = 1;

struct ModelBundle {
  std::optional<data::NormStats> stats;
  std::optional<PixelClassifier> pixel;
  std::optional<TeacherEnsemble> teachers;
  std::optional<RbfSvm> svm;
  std::optional<PatchClassifier> student;
  nlohmann::json manifest = nlohmann::json::object();
};

inline std::string teacher_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "teacher-%02zu.wsnn", i);
  return buf;
}

inline nlohmann::json read_manifest(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) {
    return {{"format", "wastesite-models"}, {"version", kBundleVersion}, {"components", nlohmann::json::object()}};
  }
  auto m = data::read_json(dir / "manifest.json");
  if (m.value("format", "") != "wastesite-models") throw FormatError((dir / "manifest.json").string() + " is not a model manifest");
  if (m.value("version", 0) != kBundleVersion) throw FormatError("unsupported model bundle version");
  return m;
}

/// Records a component's provenance (seeds, config hash, metrics) in the manifest.
inline void record_component(const fs::path& dir, const std::string& name, nlohmann::json info) {
  auto m = read_manifest(dir);
  m["components"][name] = std::move(info);
  data::write_json(dir / "manifest.json", m);
}

inline void save_stats(const fs::path& dir, const data::NormStats& s) {
  data::write_json(dir / "norm_stats.json", s);
}
inline void save_pixel(const fs::path& dir, const PixelClassifier& net) {
  fs::create_directories(dir);
  nn::save_weights(net, (dir / "pixel.wsnn").string());
}
inline void save_teachers(const fs::path& dir, const TeacherEnsemble& ens) {
  fs::create_directories(dir / "teachers");
  for (std::size_t i = 0; i < ens.members.size(); ++i) nn::save_weights(ens.members[i], (dir / "teachers" / teacher_file(i)).string());
}
inline void save_svm(const fs::path& dir, const RbfSvm& svm) {
  fs::create_directories(dir);
  save_svm((dir / "svm.wssv").string(), svm);
}
inline void save_student(const fs::path& dir, const PatchClassifier& net) {
  fs::create_directories(dir);
  nn::save_weights(net, (dir / "student.wsnn").string());
}

inline void save_bundle(const fs::path& dir, const ModelBundle& b) {
  fs::create_directories(dir);
  if (b.stats) save_stats(dir, *b.stats);
  if (b.pixel) save_pixel(dir, *b.pixel);
  if (b.teachers) save_teachers(dir, *b.teachers);
  if (b.svm) save_svm(dir, *b.svm);
  if (b.student) save_student(dir, *b.student);
  auto m = read_manifest(dir);
  for (const auto& [k, v] : b.manifest.items()) m["components"][k] = v;
  data::write_json(dir / "manifest.json", m);
}

/// Loads whatever components are present.
inline ModelBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("model bundle " + dir.string() + " does not exist");
  ModelBundle b;
  b.manifest = read_manifest(dir).at("components");
  if (fs::exists(dir / "norm_stats.json")) b.stats = data::read_json(dir / "norm_stats.json").get<data::NormStats>();
  if (fs::exists(dir / "pixel.wsnn")) b.pixel = nn::load_weights<float>((dir / "pixel.wsnn").string());
  if (fs::exists(dir / "teachers" / teacher_file(0))) {
    TeacherEnsemble ens;
    for (std::size_t i = 0; i < kEnsembleSize; ++i) {
      const auto path = dir / "teachers" / teacher_file(i);
      if (!fs::exists(path)) throw FormatError("bundle " + dir.string() + " is missing " + path.filename().string());
      ens.members.push_back(nn::load_weights<float>(path.string()));
    }
    b.teachers = std::move(ens);
  }
  if (fs::exists(dir / "svm.wssv")) b.svm = load_svm((dir / "svm.wssv").string());
  if (fs::exists(dir / "student.wsnn")) b.student = nn::load_weights<float>((dir / "student.wsnn").string());
  return b;
}

}  // namespace wastesite::models
