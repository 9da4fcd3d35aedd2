#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "json.hpp"
#include "wastesite/core/config.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/detect/candidate.hpp"
#include "wastesite/detect/heatmap.hpp"

namespace wastesite::detect {

/// Scale-space settings; scales run from min_sigma to sigma_ratio * min_sigma.
struct BlobParams {
  std::size_t num_sigma = 5;
  double sigma_ratio = 2.0;
  double threshold = 0.01;
  double overlap = 0.5;
};

inline BlobParams blob_params_from_config(const nlohmann::json& cfg) {
  const ConfigView b = ConfigView(cfg).section("detect").section("blob");
  BlobParams p{b.count("num_sigma"), b.number("sigma_ratio"), b.number("threshold"), b.number("overlap")};
  if (p.num_sigma < 1) throw ConfigError(b.key("num_sigma"), "must be >= 1");
  if (!(p.sigma_ratio >= 1.0)) throw ConfigError(b.key("sigma_ratio"), "must be >= 1");
  if (!(p.overlap >= 0.0 && p.overlap <= 1.0)) throw ConfigError(b.key("overlap"), "must lie in [0, 1]");
  return p;
}

struct Blob {
  double x = 0.0;
  double y = 0.0;
  double sigma = 0.0;
  double response = 0.0;
};

/// Log-spaced scales; a single scale when num == 1.
inline std::vector<double> blob_scales(double min_sigma, const BlobParams& p) {
  std::vector<double> s;
  const double lo = std::log(min_sigma), hi = std::log(min_sigma * p.sigma_ratio);
  for (std::size_t k = 0; k < p.num_sigma; ++k)
    s.push_back(p.num_sigma == 1 ? min_sigma : std::exp(lo + (hi - lo) * double(k) / double(p.num_sigma - 1)));
  // end points exactly, not via exp(log(.))
  s.front() = min_sigma;
  if (s.size() > 1) s.back() = min_sigma * p.sigma_ratio;
  return s;
}

namespace detail {

/// Sampled Gaussian and its first two derivatives, truncated at 4 sigma.
struct GaussianTaps {
  int radius = 0;
  std::vector<double> g, d1, d2;
};

inline GaussianTaps gaussian_taps(double sigma) {
  GaussianTaps t;
  t.radius = static_cast<int>(std::ceil(4.0 * sigma));
  const double s2 = sigma * sigma;
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  for (int i = -t.radius; i <= t.radius; ++i) {
    const double x = i;
    const double g = norm * std::exp(-x * x / (2.0 * s2));
    t.g.push_back(g);
    t.d1.push_back(-x / s2 * g);
    t.d2.push_back((x * x / (s2 * s2) - 1.0 / s2) * g);
  }
  return t;
}

/// Separable convolution with zero padding: kx along rows, then ky along columns.
inline std::vector<double> convolve(const std::vector<double>& img, std::size_t w, std::size_t h,
                                    const std::vector<double>& kx, const std::vector<double>& ky, int r) {
  std::vector<double> tmp(w * h, 0.0), out(w * h, 0.0);
  const long W = static_cast<long>(w), H = static_cast<long>(h);
  for (long y = 0; y < H; ++y) {
    const double* row = img.data() + y * W;
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      const long a = std::max(-long(r), -x), b = std::min(long(r), W - 1 - x);
      // correlation with a flipped kernel is convolution: tap i samples x - i
      for (long i = a; i <= b; ++i) acc += kx[static_cast<std::size_t>(r - i)] * row[x + i];
      tmp[y * W + x] = acc;
    }
  }
  for (long y = 0; y < H; ++y) {
    const long a = std::max(-long(r), -y), b = std::min(long(r), H - 1 - y);
    for (long i = a; i <= b; ++i) {
      const double k = ky[static_cast<std::size_t>(r - i)];
      const double* src = tmp.data() + (y + i) * W;
      double* dst = out.data() + y * W;
      for (long x = 0; x < W; ++x) dst[x] += k * src[x];
    }
  }
  return out;
}

/// Area of the lens shared by two disks.
inline double disk_intersection(double d, double r1, double r2) {
  if (d >= r1 + r2) return 0.0;
  if (d <= std::abs(r1 - r2)) return std::numbers::pi * std::pow(std::min(r1, r2), 2);
  const double a = r1 * r1 * std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1.0, 1.0));
  const double b = r2 * r2 * std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1.0, 1.0));
  const double c = 0.5 * std::sqrt(std::max(0.0, (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)));
  return a + b - c;
}

}  // namespace detail

/// Scale-normalised determinant of Hessian, sigma^4 (Lxx Lyy - Lxy^2).
inline std::vector<double> doh_response(const std::vector<double>& img, std::size_t w, std::size_t h, double sigma,
                                        std::vector<double>* trace = nullptr) {
  const auto t = detail::gaussian_taps(sigma);
  const auto lxx = detail::convolve(img, w, h, t.d2, t.g, t.radius);
  const auto lyy = detail::convolve(img, w, h, t.g, t.d2, t.radius);
  const auto lxy = detail::convolve(img, w, h, t.d1, t.d1, t.radius);
  const double s4 = std::pow(sigma, 4);
  std::vector<double> out(w * h);
  if (trace) trace->resize(w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    out[i] = s4 * (lxx[i] * lyy[i] - lxy[i] * lxy[i]);
    if (trace) (*trace)[i] = lxx[i] + lyy[i];
  }
  return out;
}

/// Bright blobs: 3x3x3 scale-space maxima of the DoH response above `threshold`, the
/// borders of image and scale range included, then overlap pruning where the blob with the
/// smaller scale gives way. Radius of a blob is its sigma.
inline std::vector<Blob> doh_blobs(const std::vector<double>& img, std::size_t w, std::size_t h, double min_sigma,
                                   const BlobParams& p = {}) {
  if (img.size() != w * h) throw ShapeError("blob image size does not match its dimensions");
  const auto scales = blob_scales(min_sigma, p);
  const std::size_t S = scales.size();
  std::vector<std::vector<double>> resp(S), trace(S);
  for (std::size_t k = 0; k < S; ++k) resp[k] = doh_response(img, w, h, scales[k], &trace[k]);

  std::vector<Blob> found;
  const long W = static_cast<long>(w), H = static_cast<long>(h), K = static_cast<long>(S);
  for (long k = 0; k < K; ++k) {
    for (long y = 0; y < H; ++y) {
      for (long x = 0; x < W; ++x) {
        const double v = resp[k][y * W + x];
        if (!(v > p.threshold) || trace[k][y * W + x] >= 0.0) continue;
        bool peak = true;
        for (long dk = -1; dk <= 1 && peak; ++dk)
          for (long dy = -1; dy <= 1 && peak; ++dy)
            for (long dx = -1; dx <= 1 && peak; ++dx) {
              const long kk = k + dk, yy = y + dy, xx = x + dx;
              if ((!dk && !dy && !dx) || kk < 0 || kk >= K || yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
              if (resp[kk][yy * W + xx] > v) peak = false;
            }
        if (peak) found.push_back({double(x), double(y), scales[k], v});
      }
    }
  }
  // strongest, then largest first so ties resolve the same way on every run
  std::stable_sort(found.begin(), found.end(), [](const Blob& a, const Blob& b) {
    if (a.sigma != b.sigma) return a.sigma > b.sigma;
    return a.response > b.response;
  });
  std::vector<char> alive(found.size(), 1);
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (!alive[i]) continue;
    for (std::size_t j = i + 1; j < found.size(); ++j) {
      if (!alive[j]) continue;
      const double d = std::hypot(found[i].x - found[j].x, found[i].y - found[j].y);
      const double r1 = found[i].sigma, r2 = found[j].sigma;
      const double smaller = std::numbers::pi * std::pow(std::min(r1, r2), 2);
      if (detail::disk_intersection(d, r1, r2) / smaller > p.overlap) alive[j] = 0;
    }
  }
  std::vector<Blob> out;
  for (std::size_t i = 0; i < found.size(); ++i)
    if (alive[i]) out.push_back(found[i]);
  std::sort(out.begin(), out.end(), [](const Blob& a, const Blob& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  return out;
}

/// Scores below the mode's pixel threshold are zeroed (invalid pixels count as 0).
inline std::vector<double> threshold_heatmap(const Heatmap& h, double threshold) {
  std::vector<double> img(h.pixels(), 0.0);
  for (std::size_t i = 0; i < h.pixels(); ++i)
    if (h.valid[i] && h.scores[i] >= static_cast<float>(threshold)) img[i] = h.scores[i];
  return img;
}

/// Candidate sites from a heatmap: blob centres in scene pixel coordinates, scale, and the
/// mean heatmap score inside radius sigma. Geo position and id follow from `geo` and `month`.
inline std::vector<CandidateSite> detect_blobs(const Heatmap& h, const SensitivityMode& mode,
                                               const GeoTransform& geo = {}, Month month = {},
                                               const BlobParams& p = {}) {
  const auto blobs = doh_blobs(threshold_heatmap(h, mode.pixel_threshold), h.width, h.height, mode.min_sigma, p);
  std::vector<CandidateSite> out;
  for (const auto& b : blobs) {
    CandidateSite c;
    c.pixel = {double(h.x0) + b.x + 0.5, double(h.y0) + b.y + 0.5};
    c.geo = geo.to_geo(c.pixel);
    c.sigma = b.sigma;
    c.mode = mode.name;
    c.month = month;
    c.id = site_id(c.geo, month);
    double sum = 0.0;
    std::size_t n = 0;
    const long r = static_cast<long>(std::floor(b.sigma));
    for (long dy = -r; dy <= r; ++dy)
      for (long dx = -r; dx <= r; ++dx) {
        const long x = long(b.x) + dx, y = long(b.y) + dy;
        if (x < 0 || y < 0 || x >= long(h.width) || y >= long(h.height) || double(dx * dx + dy * dy) > b.sigma * b.sigma) continue;
        sum += h.at(std::size_t(x), std::size_t(y));
        ++n;
      }
    c.pixel_score = n ? sum / double(n) : 0.0;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace wastesite::detect
