#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wastesite/core/rng.hpp"
#include "wastesite/nn/layer_spec.hpp"
#include "wastesite/nn/tensor.hpp"

namespace wastesite::nn {

enum class Mode { train, infer };

/// Per-call settings shared by every layer of one forward pass.
struct PassContext {
  Mode mode = Mode::infer;
  bool dropout = true;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// What a layer keeps from its forward pass for the backward pass.
template <class T>
struct LayerCache {
  Shape input_shape;
  Tensor<T> input;
  Tensor<T> output;
  Tensor<T> normalized;
  std::vector<T> inv_std;
  std::vector<T> batch_mean;
  std::vector<T> batch_var;
  std::vector<std::uint32_t> indices;
  std::vector<std::uint8_t> mask;
  /// Set for the network's first layer, whose input gradient nobody reads.
  bool first = false;
};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using RowVectorMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <class T>
using ConstRowVectorMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <class T>
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const noexcept { return spec_; }

  /// Describes what the layer expects when `in` (per-sample) does not fit, else nullopt.
  virtual std::optional<std::string> input_mismatch(const Shape& in) const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;

  virtual Tensor<T> forward(const Tensor<T>& x, const PassContext& ctx,
                            LayerCache<T>* cache) const = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                             std::span<Tensor<T>> grads) const = 0;

  std::span<Tensor<T>> parameters() noexcept { return params_; }
  std::span<const Tensor<T>> parameters() const noexcept { return params_; }
  std::span<Tensor<T>> buffers() noexcept { return buffers_; }
  std::span<const Tensor<T>> buffers() const noexcept { return buffers_; }
  virtual std::vector<std::string> parameter_names() const { return {}; }
  virtual std::vector<std::string> buffer_names() const { return {}; }

  /// Folds train-mode batch statistics into persistent state.
  virtual void absorb(const LayerCache<T>&) {}

  /// (fan_in, fan_out) for Glorot initialisation of parameter 0; (0, 0) when not applicable.
  virtual std::pair<std::size_t, std::size_t> fans() const { return {0, 0}; }

 protected:
  LayerSpec spec_;
  std::vector<Tensor<T>> params_;
  std::vector<Tensor<T>> buffers_;
};

namespace detail {

struct ConvGeometry {
  std::size_t n, h, w, c, kh, kw, ph, pw, oh, ow, k, cout;
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, std::size_t n0, std::size_t n1, T* col) {
  const std::size_t span = g.kw * g.c;
  T* dst = col;
  for (std::size_t n = n0; n < n1; ++n) {
    const T* img = x + n * g.h * g.w * g.c;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const auto x0 = static_cast<std::ptrdiff_t>(ox) - static_cast<std::ptrdiff_t>(g.pw);
        const bool row_inside = x0 >= 0 && x0 + static_cast<std::ptrdiff_t>(g.kw) <= static_cast<std::ptrdiff_t>(g.w);
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill_n(dst, span, T{0});
          } else if (row_inside) {
            std::copy_n(img + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(x0)) * g.c, span, dst);
          } else {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const auto ix = x0 + static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) {
                std::fill_n(dst + kx * g.c, g.c, T{0});
              } else {
                std::copy_n(img + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c, g.c, dst + kx * g.c);
              }
            }
          }
          dst += span;
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, std::size_t n0, std::size_t n1, T* dx) {
  const std::size_t span = g.kw * g.c;
  const T* src = col;
  for (std::size_t n = n0; n < n1; ++n) {
    T* img = dx + n * g.h * g.w * g.c;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const auto x0 = static_cast<std::ptrdiff_t>(ox) - static_cast<std::ptrdiff_t>(g.pw);
        for (std::size_t ky = 0; ky < g.kh; ++ky, src += span) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const std::size_t lo = x0 < 0 ? static_cast<std::size_t>(-x0) : 0;
          const std::size_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.kw),
                                                          static_cast<std::ptrdiff_t>(g.w) - x0);
          if (lo >= hi) continue;
          T* d = img + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(x0 + static_cast<std::ptrdiff_t>(lo))) * g.c;
          const T* s = src + lo * g.c;
          const std::size_t len = (hi - lo) * g.c;
          for (std::size_t i = 0; i < len; ++i) d[i] += s[i];
        }
      }
    }
  }
}

// Rows of the im2col matrix materialised at once; bounds scratch memory.
inline constexpr std::size_t kIm2colRows = 4096;

}  // namespace detail

template <class T>
class Conv2d final : public Layer<T> {
 public:
  explicit Conv2d(LayerSpec spec) : Layer<T>(std::move(spec)) {
    const auto& s = this->spec_;
    this->params_.emplace_back(Shape{s.kernel_h, s.kernel_w, s.in_channels, s.out_channels});
    if (s.bias) this->params_.emplace_back(Shape{s.out_channels});
  }

  std::optional<std::string> input_mismatch(const Shape& in) const override {
    const auto& s = this->spec_;
    if (in.size() != 3 || in[2] != s.in_channels) {
      return "expects (H, W, " + std::to_string(s.in_channels) + ") input";
    }
    if (s.padding == Padding::valid && (in[0] < s.kernel_h || in[1] < s.kernel_w)) {
      return "needs at least " + std::to_string(s.kernel_h) + "x" + std::to_string(s.kernel_w) +
             " spatial extent";
    }
    return std::nullopt;
  }

  Shape output_shape(const Shape& in) const override {
    const auto& s = this->spec_;
    if (s.padding == Padding::same) return {in[0], in[1], s.out_channels};
    return {in[0] - s.kernel_h + 1, in[1] - s.kernel_w + 1, s.out_channels};
  }

  std::vector<std::string> parameter_names() const override {
    if (this->spec_.bias) return {"kernel", "bias"};
    return {"kernel"};
  }

  std::pair<std::size_t, std::size_t> fans() const override {
    const auto& s = this->spec_;
    return {s.kernel_h * s.kernel_w * s.in_channels, s.kernel_h * s.kernel_w * s.out_channels};
  }

  Tensor<T> forward(const Tensor<T>& x, const PassContext&, LayerCache<T>* cache) const override {
    const auto g = geometry(x.shape());
    Tensor<T> y(Shape{g.n, g.oh, g.ow, g.cout});
    const ConstMatrixMap<T> kernel(this->params_[0].data(), g.k, g.cout);
    const std::size_t per_sample = g.oh * g.ow;
    const std::size_t chunk = std::max<std::size_t>(1, detail::kIm2colRows / per_sample);
    std::vector<T> col(std::min(chunk, g.n) * per_sample * g.k);
    for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
      const std::size_t n1 = std::min(g.n, n0 + chunk);
      const std::size_t rows = (n1 - n0) * per_sample;
      detail::im2col(x.data(), g, n0, n1, col.data());
      const ConstMatrixMap<T> cm(col.data(), rows, g.k);
      MatrixMap<T> out(y.data() + n0 * per_sample * g.cout, rows, g.cout);
      out.noalias() = cm * kernel;
      if (this->spec_.bias) out.rowwise() += ConstRowVectorMap<T>(this->params_[1].data(), g.cout);
    }
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads) const override {
    const Tensor<T>& x = cache.input;
    const auto g = geometry(x.shape());
    const ConstMatrixMap<T> kernel(this->params_[0].data(), g.k, g.cout);
    MatrixMap<T> dkernel(grads[0].data(), g.k, g.cout);
    dkernel.setZero();
    const std::size_t per_sample = g.oh * g.ow;
    if (this->spec_.bias) {
      const ConstMatrixMap<T> dall(dy.data(), g.n * per_sample, g.cout);
      RowVectorMap<T>(grads[1].data(), g.cout) = dall.colwise().sum();
    }

    Tensor<T> dx(cache.first ? Shape{0} : x.shape(), T{0});
    const std::size_t chunk = std::max<std::size_t>(1, detail::kIm2colRows / per_sample);
    std::vector<T> col(std::min(chunk, g.n) * per_sample * g.k);
    std::vector<T> dcol(cache.first ? 0 : col.size());
    for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
      const std::size_t n1 = std::min(g.n, n0 + chunk);
      const std::size_t rows = (n1 - n0) * per_sample;
      detail::im2col(x.data(), g, n0, n1, col.data());
      const ConstMatrixMap<T> cm(col.data(), rows, g.k);
      const ConstMatrixMap<T> dym(dy.data() + n0 * per_sample * g.cout, rows, g.cout);
      dkernel.noalias() += cm.transpose() * dym;
      if (cache.first) continue;
      MatrixMap<T> dcm(dcol.data(), rows, g.k);
      dcm.noalias() = dym * kernel.transpose();
      detail::col2im_add(dcol.data(), g, n0, n1, dx.data());
    }
    return dx;
  }

 private:
  detail::ConvGeometry geometry(const Shape& xs) const {
    const auto& s = this->spec_;
    detail::ConvGeometry g{};
    g.n = xs[0];
    g.h = xs[1];
    g.w = xs[2];
    g.c = xs[3];
    g.kh = s.kernel_h;
    g.kw = s.kernel_w;
    g.ph = s.padding == Padding::same ? (s.kernel_h - 1) / 2 : 0;
    g.pw = s.padding == Padding::same ? (s.kernel_w - 1) / 2 : 0;
    g.oh = g.h + 2 * g.ph - g.kh + 1;
    g.ow = g.w + 2 * g.pw - g.kw + 1;
    g.k = g.kh * g.kw * g.c;
    g.cout = s.out_channels;
    return g;
  }
};

template <class T>
class Dense final : public Layer<T> {
 public:
  explicit Dense(LayerSpec spec) : Layer<T>(std::move(spec)) {
    this->params_.emplace_back(Shape{this->spec_.in_units, this->spec_.out_units});
    if (this->spec_.bias) this->params_.emplace_back(Shape{this->spec_.out_units});
  }

  std::optional<std::string> input_mismatch(const Shape& in) const override {
    if (in.size() != 1 || in[0] != this->spec_.in_units) {
      return "expects a flat vector of " + std::to_string(this->spec_.in_units) + " units";
    }
    return std::nullopt;
  }
  Shape output_shape(const Shape&) const override { return {this->spec_.out_units}; }
  std::vector<std::string> parameter_names() const override {
    if (this->spec_.bias) return {"kernel", "bias"};
    return {"kernel"};
  }
  std::pair<std::size_t, std::size_t> fans() const override {
    return {this->spec_.in_units, this->spec_.out_units};
  }

  Tensor<T> forward(const Tensor<T>& x, const PassContext&, LayerCache<T>* cache) const override {
    const std::size_t n = x.dim(0);
    const std::size_t in = this->spec_.in_units;
    const std::size_t out = this->spec_.out_units;
    Tensor<T> y(Shape{n, out});
    const ConstMatrixMap<T> xm(x.data(), n, in);
    const ConstMatrixMap<T> w(this->params_[0].data(), in, out);
    MatrixMap<T> ym(y.data(), n, out);
    ym.noalias() = xm * w;
    if (this->spec_.bias) ym.rowwise() += ConstRowVectorMap<T>(this->params_[1].data(), out);
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads) const override {
    const std::size_t n = dy.dim(0);
    const std::size_t in = this->spec_.in_units;
    const std::size_t out = this->spec_.out_units;
    const ConstMatrixMap<T> xm(cache.input.data(), n, in);
    const ConstMatrixMap<T> dym(dy.data(), n, out);
    const ConstMatrixMap<T> w(this->params_[0].data(), in, out);
    MatrixMap<T>(grads[0].data(), in, out).noalias() = xm.transpose() * dym;
    if (this->spec_.bias) RowVectorMap<T>(grads[1].data(), out) = dym.colwise().sum();
    Tensor<T> dx(cache.input.shape());
    MatrixMap<T>(dx.data(), n, in).noalias() = dym * w.transpose();
    return dx;
  }
};

template <class T>
class MaxPool final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  std::optional<std::string> input_mismatch(const Shape& in) const override {
    if (in.size() != 3 || in[0] < this->spec_.pool || in[1] < this->spec_.pool) {
      return "expects (H, W, C) input of at least the pool size";
    }
    return std::nullopt;
  }
  Shape output_shape(const Shape& in) const override {
    return {in[0] / this->spec_.pool, in[1] / this->spec_.pool, in[2]};
  }

  Tensor<T> forward(const Tensor<T>& x, const PassContext&, LayerCache<T>* cache) const override {
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::size_t p = this->spec_.pool;
    const std::size_t oh = h / p, ow = w / p;
    Tensor<T> y(Shape{n, oh, ow, c});
    std::vector<std::uint32_t> idx;
    if (cache) idx.resize(y.size());
    std::size_t o = 0;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          for (std::size_t ch = 0; ch < c; ++ch, ++o) {
            std::size_t best = ((b * h + oy * p) * w + ox * p) * c + ch;
            T best_v = x[best];
            for (std::size_t dy = 0; dy < p; ++dy) {
              for (std::size_t dx = 0; dx < p; ++dx) {
                const std::size_t i = ((b * h + oy * p + dy) * w + ox * p + dx) * c + ch;
                if (x[i] > best_v) {
                  best_v = x[i];
                  best = i;
                }
              }
            }
            y[o] = best_v;
            if (cache) idx[o] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
    if (cache) {
      cache->input_shape = x.shape();
      cache->indices = std::move(idx);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>>) const override {
    Tensor<T> dx(cache.input_shape, T{0});
    for (std::size_t o = 0; o < dy.size(); ++o) dx[cache.indices[o]] += dy[o];
    return dx;
  }
};

template <class T>
class Relu final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::optional<std::string> input_mismatch(const Shape&) const override { return std::nullopt; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, const PassContext&, LayerCache<T>* cache) const override {
    Tensor<T> y(x.shape());
    const T* src = x.data();
    T* dst = y.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
    if (cache) {
      cache->mask.resize(n);
      for (std::size_t i = 0; i < n; ++i) cache->mask[i] = src[i] > T{0};
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>>) const override {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!cache.mask[i]) dx[i] = T{0};
    }
    return dx;
  }
};

template <class T>
class Sigmoid final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::optional<std::string> input_mismatch(const Shape&) const override { return std::nullopt; }
  Shape output_shape(const Shape& in) const override { return in; }

  static T apply(T z) noexcept {
    // Branching keeps exp() from overflowing for large |z|.
    if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
    const T e = std::exp(z);
    return e / (T{1} + e);
  }

  Tensor<T> forward(const Tensor<T>& x, const PassContext&, LayerCache<T>* cache) const override {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = apply(v);
    if (cache) {
      cache->input = x;
      cache->output = y;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>>) const override {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T s = cache.output[i];
      dx[i] *= s * (T{1} - s);
    }
    return dx;
  }
};

template <class T>
class Flatten final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::optional<std::string> input_mismatch(const Shape&) const override { return std::nullopt; }
  Shape output_shape(const Shape& in) const override { return {element_count(in)}; }

  Tensor<T> forward(const Tensor<T>& x, const PassContext&, LayerCache<T>* cache) const override {
    Tensor<T> y = x;
    y.reshape({x.dim(0), x.stride0()});
    if (cache) cache->input_shape = x.shape();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>>) const override {
    Tensor<T> dx = dy;
    dx.reshape(cache.input_shape);
    return dx;
  }
};

/// Inverted dropout: surviving activations are scaled by 1/(1-rate) at train time.
template <class T>
class Dropout final : public Layer<T> {
 public:
  Dropout(LayerSpec spec, std::uint64_t salt) : Layer<T>(std::move(spec)), salt_(salt) {}

  std::optional<std::string> input_mismatch(const Shape&) const override { return std::nullopt; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, const PassContext& ctx, LayerCache<T>* cache) const override {
    if (ctx.mode == Mode::infer || !ctx.dropout || this->spec_.rate == 0.0) {
      if (cache) cache->mask.clear();
      return x;
    }
    const double rate = this->spec_.rate;
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> y(x.shape());
    std::vector<std::uint8_t> keep(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = CounterRng::to_unit(CounterRng::at(ctx.seed ^ salt_, ctx.step, i));
      keep[i] = u >= rate;
      y[i] = keep[i] ? x[i] * scale : T{0};
    }
    if (cache) cache->mask = std::move(keep);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>>) const override {
    if (cache.mask.empty()) return dy;
    const T scale = static_cast<T>(1.0 / (1.0 - this->spec_.rate));
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = cache.mask[i] ? dy[i] * scale : T{0};
    return dx;
  }

 private:
  std::uint64_t salt_;
};

/// Normalises over every axis but the last. Running statistics are used in infer mode.
template <class T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(LayerSpec spec) : Layer<T>(std::move(spec)) {
    const std::size_t c = this->spec_.channels;
    this->params_.emplace_back(Shape{c}, T{1});
    this->params_.emplace_back(Shape{c}, T{0});
    this->buffers_.emplace_back(Shape{c}, T{0});
    this->buffers_.emplace_back(Shape{c}, T{1});
  }

  std::optional<std::string> input_mismatch(const Shape& in) const override {
    if (in.empty() || in.back() != this->spec_.channels) {
      return "expects " + std::to_string(this->spec_.channels) + " channels on the last axis";
    }
    return std::nullopt;
  }
  Shape output_shape(const Shape& in) const override { return in; }
  std::vector<std::string> parameter_names() const override { return {"gamma", "beta"}; }
  std::vector<std::string> buffer_names() const override { return {"running_mean", "running_var"}; }

  Tensor<T> forward(const Tensor<T>& x, const PassContext& ctx, LayerCache<T>* cache) const override {
    const std::size_t c = this->spec_.channels;
    const std::size_t rows = x.size() / c;
    const T eps = static_cast<T>(this->spec_.epsilon);
    const T* gamma = this->params_[0].data();
    const T* beta = this->params_[1].data();
    Tensor<T> y(x.shape());
    if (ctx.mode == Mode::infer) {
      const T* mean = this->buffers_[0].data();
      const T* var = this->buffers_[1].data();
      std::vector<T> scale(c), shift(c);
      for (std::size_t k = 0; k < c; ++k) {
        scale[k] = gamma[k] / std::sqrt(var[k] + eps);
        shift[k] = beta[k] - mean[k] * scale[k];
      }
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < c; ++k) y[r * c + k] = x[r * c + k] * scale[k] + shift[k];
      }
      return y;
    }

    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < c; ++k) mean[k] += x[r * c + k];
    }
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < c; ++k) {
        const double d = x[r * c + k] - mean[k];
        var[k] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<double>(rows);

    Tensor<T> xhat(x.shape());
    std::vector<T> inv_std(c);
    for (std::size_t k = 0; k < c; ++k) inv_std[k] = static_cast<T>(1.0 / std::sqrt(var[k] + this->spec_.epsilon));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = r * c + k;
        xhat[i] = (x[i] - static_cast<T>(mean[k])) * inv_std[k];
        y[i] = gamma[k] * xhat[i] + beta[k];
      }
    }
    if (cache) {
      cache->normalized = std::move(xhat);
      cache->inv_std = std::move(inv_std);
      cache->batch_mean.assign(mean.begin(), mean.end());
      cache->batch_var.assign(var.begin(), var.end());
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache,
                     std::span<Tensor<T>> grads) const override {
    const std::size_t c = this->spec_.channels;
    const std::size_t rows = dy.size() / c;
    const T* gamma = this->params_[0].data();
    std::vector<T> dgamma(c, T{0}), dbeta(c, T{0});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = r * c + k;
        dbeta[k] += dy[i];
        dgamma[k] += dy[i] * cache.normalized[i];
      }
    }
    Tensor<T> dx(dy.shape());
    const T m = static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = r * c + k;
        dx[i] = gamma[k] * cache.inv_std[k] / m *
                (m * dy[i] - dbeta[k] - cache.normalized[i] * dgamma[k]);
      }
    }
    std::copy(dgamma.begin(), dgamma.end(), grads[0].data());
    std::copy(dbeta.begin(), dbeta.end(), grads[1].data());
    return dx;
  }

  void absorb(const LayerCache<T>& cache) override {
    if (cache.batch_mean.empty()) return;
    const T mom = static_cast<T>(this->spec_.momentum);
    for (std::size_t k = 0; k < this->spec_.channels; ++k) {
      this->buffers_[0][k] = mom * this->buffers_[0][k] + (T{1} - mom) * cache.batch_mean[k];
      this->buffers_[1][k] = mom * this->buffers_[1][k] + (T{1} - mom) * cache.batch_var[k];
    }
  }
};

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, std::size_t index) {
  spec.validate();
  switch (spec.kind) {
    case LayerKind::conv2d: return std::make_unique<Conv2d<T>>(spec);
    case LayerKind::dense: return std::make_unique<Dense<T>>(spec);
    case LayerKind::maxpool: return std::make_unique<MaxPool<T>>(spec);
    case LayerKind::relu: return std::make_unique<Relu<T>>(spec);
    case LayerKind::sigmoid: return std::make_unique<Sigmoid<T>>(spec);
    case LayerKind::flatten: return std::make_unique<Flatten<T>>(spec);
    case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec, CounterRng::mix(index + 1));
    case LayerKind::batchnorm: return std::make_unique<BatchNorm<T>>(spec);
  }
  throw ShapeError("unknown layer kind");
}

}  // namespace wastesite::nn
