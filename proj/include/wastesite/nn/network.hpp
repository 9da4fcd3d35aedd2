#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/nn/layers.hpp"

namespace wastesite::nn {

/// Forward-pass record consumed by `Network::backward`.
template <class T>
struct Tape {
  std::vector<LayerCache<T>> caches;
  Tensor<T> output;
};

/// Sequential network. `infer` is const and safe to call from many threads at once.
template <class T = float>
class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
    build();
    initialize();
  }

  Network(const Network& other) : spec_(other.spec_), seed_(other.seed_), mode_(other.mode_) {
    build();
    copy_state_from(other);
  }

  Network& operator=(const Network& other) {
    if (this != &other) {
      Network tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode m) noexcept { mode_ = m; }
  const Shape& input_shape() const noexcept { return spec_.input_shape; }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  bool ends_with_sigmoid() const noexcept {
    return !layers_.empty() && layers_.back()->spec().kind == LayerKind::sigmoid;
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_)
      for (auto& p : l->parameters()) out.push_back(&p);
    return out;
  }
  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (const auto& l : layers_)
      for (const auto& p : l->parameters()) out.push_back(&p);
    return out;
  }
  std::vector<Tensor<T>*> buffers() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_)
      for (auto& b : l->buffers()) out.push_back(&b);
    return out;
  }
  std::vector<const Tensor<T>*> buffers() const {
    std::vector<const Tensor<T>*> out;
    for (const auto& l : layers_)
      for (const auto& b : l->buffers()) out.push_back(&b);
    return out;
  }

  /// "layer/param" names, parameters first then buffers, in storage order.
  std::vector<std::string> state_names() const {
    std::vector<std::string> names;
    for (const auto& l : layers_)
      for (const auto& n : l->parameter_names()) names.push_back(l->spec().name + "/" + n);
    for (const auto& l : layers_)
      for (const auto& n : l->buffer_names()) names.push_back(l->spec().name + "/" + n);
    return names;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  /// Inference-mode forward pass: dropout off, batchnorm on running statistics.
  Tensor<T> infer(const Tensor<T>& batch) const {
    PassContext ctx;
    ctx.mode = Mode::infer;
    return run(batch, ctx, nullptr);
  }

  /// Forward pass in the network's current mode.
  Tensor<T> forward(const Tensor<T>& batch, std::uint64_t step = 0) const {
    PassContext ctx;
    ctx.mode = mode_;
    ctx.seed = seed_;
    ctx.step = step;
    return run(batch, ctx, nullptr);
  }

  /// Forward pass that records what backward needs.
  Tape<T> record(const Tensor<T>& batch, const PassContext& ctx) const {
    Tape<T> tape;
    tape.caches.resize(layers_.size());
    if (!tape.caches.empty()) tape.caches[0].first = true;
    tape.output = run(batch, ctx, &tape);
    return tape;
  }

  /// Folds batch statistics from a train-mode tape into running state.
  void absorb(const Tape<T>& tape) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->absorb(tape.caches[i]);
  }

  /// Gradients for every parameter (same order as `parameters()`), given dL/d(output of
  /// layer `end - 1`). Passing `end = layer_count() - 1` on a sigmoid-terminated network
  /// starts from the logits.
  std::vector<Tensor<T>> backward(const Tape<T>& tape, Tensor<T> grad, std::size_t end) const {
    std::vector<Tensor<T>> grads;
    std::vector<std::size_t> offset(layers_.size() + 1, 0);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (const auto& p : layers_[i]->parameters()) grads.emplace_back(p.shape(), T{0});
      offset[i + 1] = grads.size();
    }
    for (std::size_t i = end; i-- > 0;) {
      std::span<Tensor<T>> g(grads.data() + offset[i], offset[i + 1] - offset[i]);
      grad = layers_[i]->backward(grad, tape.caches[i], g);
    }
    return grads;
  }

  std::vector<Tensor<T>> backward(const Tape<T>& tape, Tensor<T> grad) const {
    return backward(tape, std::move(grad), layers_.size());
  }

  /// Same architecture and state in another scalar type.
  template <class U>
  Network<U> cast() const {
    Network<U> out(spec_, seed_);
    out.set_mode(mode_);
    auto dst_p = out.parameters();
    auto src_p = parameters();
    for (std::size_t i = 0; i < src_p.size(); ++i) *dst_p[i] = src_p[i]->template cast<U>();
    auto dst_b = out.buffers();
    auto src_b = buffers();
    for (std::size_t i = 0; i < src_b.size(); ++i) *dst_b[i] = src_b[i]->template cast<U>();
    return out;
  }

  void check_batch(const Tensor<T>& batch) const {
    const Shape& s = batch.shape();
    bool ok = s.size() == spec_.input_shape.size() + 1;
    for (std::size_t i = 0; ok && i < spec_.input_shape.size(); ++i) ok = s[i + 1] == spec_.input_shape[i];
    if (!ok) {
      throw ShapeError("batch shape " + to_string(s) + " does not match network input (N, " +
                       to_string(spec_.input_shape).substr(1));
    }
  }

 private:
  Tensor<T> run(const Tensor<T>& batch, const PassContext& ctx, Tape<T>* tape) const {
    check_batch(batch);
    return run_from(0, batch, ctx, tape);
  }

 public:
  /// Layers [first, last) applied to the input of layer `first`.
  Tensor<T> run_from(std::size_t first, const Tensor<T>& input, const PassContext& ctx, Tape<T>* tape,
                     std::size_t last = static_cast<std::size_t>(-1)) const {
    Tensor<T> x = input;
    for (std::size_t i = first; i < std::min(last, layers_.size()); ++i) {
      x = layers_[i]->forward(x, ctx, tape ? &tape->caches[i] : nullptr);
      if (!x.all_finite()) {
        throw NumericError("non-finite activation at layer " + std::to_string(i) + " " +
                           layers_[i]->spec().label());
      }
    }
    return x;
  }

 private:
  void build() {
    layers_.clear();
    shapes_.clear();
    if (spec_.input_shape.empty()) throw ShapeError("network input shape is empty");
    Shape shape = spec_.input_shape;
    shapes_.push_back(shape);
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      auto layer = make_layer<T>(spec_.layers[i], i);
      if (auto why = layer->input_mismatch(shape)) {
        const std::string producer =
            i == 0 ? std::string("the network input")
                   : "layer " + std::to_string(i - 1) + " " + spec_.layers[i - 1].label();
        throw ShapeError("layer " + std::to_string(i) + " " + spec_.layers[i].label() + " " +
                         *why + ", but " + producer + " produces " + to_string(shape));
      }
      shape = layer->output_shape(shape);
      shapes_.push_back(shape);
      layers_.push_back(std::move(layer));
    }
  }

  /// Glorot-uniform kernels, zero biases; draws depend only on (seed, layer index).
  void initialize() {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto [fan_in, fan_out] = layers_[i]->fans();
      if (fan_in == 0) continue;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      CounterRng rng = CounterRng(seed_).fork(i);
      for (auto& w : layers_[i]->parameters()[0].values()) {
        T v = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
        while (std::abs(static_cast<double>(v)) > limit) v = std::nextafter(v, T{0});
        w = v;
      }
    }
  }

  void copy_state_from(const Network& other) {
    auto dst_p = parameters();
    auto src_p = other.parameters();
    for (std::size_t i = 0; i < src_p.size(); ++i) *dst_p[i] = *src_p[i];
    auto dst_b = buffers();
    auto src_b = other.buffers();
    for (std::size_t i = 0; i < src_b.size(); ++i) *dst_b[i] = *src_b[i];
  }

  NetworkSpec spec_;
  std::uint64_t seed_ = 0;
  Mode mode_ = Mode::infer;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Shape> shapes_;
};

template <class T = float>
Network<T> build_network(NetworkSpec spec, std::uint64_t seed) {
  return Network<T>(std::move(spec), seed);
}

}  // namespace wastesite::nn
