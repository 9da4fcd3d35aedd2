#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wastesite/core/binary_io.hpp"
#include "wastesite/core/error.hpp"

namespace wastesite::models {

struct SvmConfig {
  double C = 1.0;
  /// RBF width; <= 0 selects 1 / (d * var(X)).
  double gamma = 0.0;
  double tolerance = 1e-3;
  /// 0 picks max(10'000'000, 100 n).
  std::size_t max_iterations = 0;
};

/// Binary RBF-kernel SVM. Labels are +1 / -1; decision(x) = sum alpha_i y_i K(x_i, x) - rho.
class RbfSvm {
 public:
  std::size_t dim = 0;
  double gamma = 0.0;
  double C = 1.0;
  double rho = 0.0;
  std::vector<double> alpha;   // support-vector multipliers, 0 < alpha <= C
  std::vector<double> label;   // +1 / -1
  std::vector<float> vectors;  // alpha.size() x dim, row-major
  std::size_t iterations = 0;
  /// max violating-pair gap at termination.
  double kkt_gap = 0.0;

  std::size_t support_count() const noexcept { return alpha.size(); }

  /// Decision values for `n` row-major samples of length `dim`.
  std::vector<double> decision(std::span<const float> xs) const {
    if (dim == 0 || xs.size() % dim != 0) throw ShapeError("svm input length does not match dimension " + std::to_string(dim));
    const std::size_t n = xs.size() / dim;
    std::vector<double> out(n, -rho);
    if (alpha.empty()) return out;
    using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const Mat> sv(vectors.data(), static_cast<Eigen::Index>(alpha.size()), static_cast<Eigen::Index>(dim));
    const Eigen::VectorXd sv_norm = sv.cast<double>().rowwise().squaredNorm();
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < n; start += kChunk) {
      const std::size_t m = std::min(kChunk, n - start);
      const Eigen::Map<const Mat> x(xs.data() + start * dim, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dim));
      const Eigen::MatrixXd dots = (sv * x.transpose()).cast<double>();
      const Eigen::VectorXd x_norm = x.cast<double>().rowwise().squaredNorm();
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
          const double d2 = std::max(0.0, sv_norm[static_cast<Eigen::Index>(i)] + x_norm[static_cast<Eigen::Index>(j)] -
                                              2.0 * dots(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
          s += alpha[i] * label[i] * std::exp(-gamma * d2);
        }
        out[start + j] += s;
      }
    }
    return out;
  }

  double decision_one(std::span<const float> x) const { return decision(x).front(); }
};

namespace detail {

/// Full RBF Gram matrix in double from row-major float samples.
inline Eigen::MatrixXd rbf_gram(std::span<const float> xs, std::size_t n, std::size_t d, double gamma) {
  using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> x(xs.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::MatrixXd xd = x.cast<double>();
  Eigen::MatrixXd k = xd * xd.transpose();
  const Eigen::VectorXd norms = k.diagonal();
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      k(i, j) = std::exp(-gamma * std::max(0.0, norms[i] + norms[j] - 2.0 * k(i, j)));
  return k;
}

}  // namespace detail

/// C-SVC dual by sequential minimal optimization with second-order working-set selection.
/// Labels: any value > 0 is the positive class.
inline RbfSvm train_svm(std::span<const float> xs, std::span<const float> labels, std::size_t dim,
                        const SvmConfig& cfg = {}) {
  if (dim == 0 || xs.size() != labels.size() * dim)
    throw ShapeError("svm training data: " + std::to_string(xs.size()) + " values for " + std::to_string(labels.size()) +
                     " labels of dimension " + std::to_string(dim));
  if (!(cfg.C > 0.0)) throw ConfigError("svm.C", "must be > 0");
  const std::size_t n = labels.size();
  std::vector<double> y(n);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = labels[i] > 0.0f ? 1.0 : -1.0;
    positives += y[i] > 0;
  }
  if (positives == 0 || positives == n) throw DataError("svm training needs both classes present");

  double gamma = cfg.gamma;
  if (!(gamma > 0.0)) {
    double sum = 0.0, sq = 0.0;
    for (const float v : xs) sum += v;
    const double mean = sum / static_cast<double>(xs.size());
    for (const float v : xs) sq += (v - mean) * (v - mean);
    const double var = sq / static_cast<double>(xs.size());
    gamma = var > 0.0 ? 1.0 / (static_cast<double>(dim) * var) : 1.0 / static_cast<double>(dim);
  }

  const Eigen::MatrixXd K = detail::rbf_gram(xs, n, dim, gamma);
  const double C = cfg.C;
  constexpr double kTau = 1e-12;
  std::vector<double> a(n, 0.0), G(n, -1.0);
  auto Q = [&](std::size_t i, std::size_t j) {
    return y[i] * y[j] * K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  };
  auto up = [&](std::size_t t) { return (y[t] > 0 && a[t] < C) || (y[t] < 0 && a[t] > 0); };
  auto low = [&](std::size_t t) { return (y[t] > 0 && a[t] > 0) || (y[t] < 0 && a[t] < C); };

  const std::size_t cap = cfg.max_iterations ? cfg.max_iterations : std::max<std::size_t>(10'000'000, 100 * n);
  std::size_t iter = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (;; ++iter) {
    // i: maximal violator in I_up; j: second-order choice in I_low.
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t)
      if (up(t) && -y[t] * G[t] >= gmax) {
        gmax = -y[t] * G[t];
        i = t;
      }
    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!low(t)) continue;
      const double v = -y[t] * G[t];
      gmin = std::min(gmin, v);
      if (i == n || v >= gmax) continue;
      const double b = gmax - v;
      double aa = K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +
                  K(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) -
                  2.0 * K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
      if (aa <= 0) aa = kTau;
      const double score = -(b * b) / aa;
      if (score <= best) {
        best = score;
        j = t;
      }
    }
    gap = gmax - gmin;
    if (gap < cfg.tolerance || j == n || i == n) break;
    if (iter >= cap) {
      throw DataError("svm did not converge within " + std::to_string(cap) + " iterations; KKT gap " + std::to_string(gap));
    }

    // Two-variable subproblem, clipped to the box (LIBSVM's update).
    const double old_ai = a[i], old_aj = a[j];
    double quad = Q(i, i) + Q(j, j) - 2.0 * y[i] * y[j] * Q(i, j);
    if (quad <= 0) quad = kTau;
    if (y[i] != y[j]) {
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0 && a[j] < 0) {
        a[j] = 0;
        a[i] = diff;
      } else if (diff <= 0 && a[i] < 0) {
        a[i] = 0;
        a[j] = -diff;
      }
      if (diff > 0 && a[i] > C) {
        a[i] = C;
        a[j] = C - diff;
      } else if (diff <= 0 && a[j] > C) {
        a[j] = C;
        a[i] = C + diff;
      }
    } else {
      const double delta = (G[i] - G[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > C && a[i] > C) {
        a[i] = C;
        a[j] = sum - C;
      } else if (sum <= C && a[j] < 0) {
        a[j] = 0;
        a[i] = sum;
      }
      if (sum > C && a[j] > C) {
        a[j] = C;
        a[i] = sum - C;
      } else if (sum <= C && a[i] < 0) {
        a[i] = 0;
        a[j] = sum;
      }
    }
    const double di = a[i] - old_ai, dj = a[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) G[t] += Q(t, i) * di + Q(t, j) * dj;
  }

  // rho: mean of y G over free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (a[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (a[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }

  RbfSvm svm;
  svm.dim = dim;
  svm.gamma = gamma;
  svm.C = C;
  svm.rho = free_count ? free_sum / static_cast<double>(free_count) : (ub + lb) / 2.0;
  svm.iterations = iter;
  svm.kkt_gap = gap;
  for (std::size_t t = 0; t < n; ++t) {
    if (a[t] <= 0) continue;
    svm.alpha.push_back(a[t]);
    svm.label.push_back(y[t]);
    svm.vectors.insert(svm.vectors.end(), xs.begin() + static_cast<std::ptrdiff_t>(t * dim),
                       xs.begin() + static_cast<std::ptrdiff_t>((t + 1) * dim));
  }
  return svm;
}

// Binary file: "WSSV" | u32 version | u32 dim | u32 count | f64 gamma | f64 C | f64 rho |
// count x (f64 alpha, f64 label) | count x dim f32 vectors. Little-endian.
inline constexpr std::uint32_t kSvmVersion = 1;

inline std::string encode_svm(const RbfSvm& s) {
  io::ByteWriter w;
  w.bytes("WSSV");
  w.u32(kSvmVersion);
  w.u32(static_cast<std::uint32_t>(s.dim));
  w.u32(static_cast<std::uint32_t>(s.alpha.size()));
  w.f64(s.gamma);
  w.f64(s.C);
  w.f64(s.rho);
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    w.f64(s.alpha[i]);
    w.f64(s.label[i]);
  }
  w.f32s(std::span<const float>(s.vectors));
  return w.take();
}

inline RbfSvm decode_svm(std::string_view bytes, const std::string& context = "svm") {
  io::ByteReader r(bytes, context);
  if (r.bytes(4) != "WSSV") throw FormatError(context + ": not an svm file");
  if (const auto v = r.u32(); v != kSvmVersion) throw FormatError(context + ": unsupported svm version " + std::to_string(v));
  RbfSvm s;
  s.dim = r.u32();
  const std::size_t count = r.u32();
  s.gamma = r.f64();
  s.C = r.f64();
  s.rho = r.f64();
  s.alpha.resize(count);
  s.label.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    s.alpha[i] = r.f64();
    s.label[i] = r.f64();
  }
  s.vectors.resize(count * s.dim);
  r.f32s(std::span<float>(s.vectors));
  if (!r.at_end()) throw FormatError(context + ": trailing bytes");
  return s;
}

inline void save_svm(const std::string& path, const RbfSvm& s) { io::write_file(path, encode_svm(s)); }
inline RbfSvm load_svm(const std::string& path) { return decode_svm(io::read_file(path), path); }

}  // namespace wastesite::models
