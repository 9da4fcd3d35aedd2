#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/nn/network.hpp"

namespace wastesite::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Multiplies the learning rate by `factor` every `period` epochs.
struct LrSchedule {
  double factor = 0.5;
  int period = 10;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  int epochs = 10;
  AdamConfig adam;
  std::optional<LrSchedule> schedule;
  std::uint64_t shuffle_seed = 0;
  std::function<void(int epoch, double loss, double accuracy)> on_epoch;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate", "must be a finite value >= 0");
    }
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
    if (schedule && (schedule->period < 1 || !(schedule->factor > 0.0))) {
      throw ConfigError("lr_schedule", "needs period >= 1 and factor > 0");
    }
  }

  double rate_at(int epoch) const {
    if (!schedule) return learning_rate;
    return learning_rate * std::pow(schedule->factor, epoch / schedule->period);
  }
};

template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
            double lr) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->shape(), T{0});
        v_.emplace_back(p->shape(), T{0});
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T step = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
      T* w = params[k]->data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      const T* g = grads[k].data();
      const std::size_t n = params[k]->size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        w[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  long long steps() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  long long t_ = 0;
};

/// Binary cross-entropy evaluated from logits; targets may be soft.
template <class T>
double bce_from_logit(T z, T target) {
  const double zd = z;
  const double t = target;
  return std::max(zd, 0.0) - zd * t + std::log1p(std::exp(-std::abs(zd)));
}

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> accuracy;
  std::size_t steps = 0;
};

/// Minibatch Adam on binary cross-entropy. The network must end in a sigmoid; the loss
/// gradient is taken at the logits.
template <class T>
TrainHistory train(Network<T>& net, const Tensor<T>& inputs, const Tensor<T>& targets,
                   const TrainConfig& cfg) {
  cfg.validate();
  net.check_batch(inputs);
  if (!net.ends_with_sigmoid()) throw ShapeError("training needs a sigmoid output layer");
  const std::size_t n = inputs.dim(0);
  const std::size_t out = element_count(net.output_shape());
  if (targets.size() != n * out) {
    throw ShapeError("targets hold " + std::to_string(targets.size()) + " values for " +
                     std::to_string(n) + " samples of " + std::to_string(out) + " outputs");
  }
  for (const T t : targets.values()) {
    if (!(t >= T{0} && t <= T{1})) throw DataError("targets must lie in [0, 1]");
  }

  Adam<T> adam(cfg.adam);
  TrainHistory history;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng shuffler(cfg.shuffle_seed ^ CounterRng::mix(net.seed()));
  const std::size_t logit_layer = net.layer_count() - 1;
  net.set_mode(Mode::train);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(std::span<std::size_t>(order));
    const double lr = cfg.rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Tensor<T> xb = gather_rows(inputs, rows);

      PassContext ctx;
      ctx.mode = Mode::train;
      ctx.seed = net.seed();
      ctx.step = history.steps;
      Tape<T> tape;
      try {
        tape = net.record(xb, ctx);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      const Tensor<T>& logits = tape.caches[logit_layer].input;
      Tensor<T> grad(logits.shape());
      const T inv = T{1} / static_cast<T>(rows.size());
      double batch_loss = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < out; ++k) {
          const std::size_t i = r * out + k;
          const T t = targets[rows[r] * out + k];
          batch_loss += bce_from_logit(logits[i], t);
          grad[i] = (tape.output[i] - t) * inv;
          correct += (tape.output[i] >= T{0.5}) == (t >= T{0.5});
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index));
      }
      loss_sum += batch_loss;
      net.absorb(tape);
      const auto grads = net.backward(tape, std::move(grad), logit_layer);
      adam.step(net.parameters(), grads, lr);
      ++history.steps;
    }
    const double denom = static_cast<double>(std::max<std::size_t>(1, n * out));
    history.loss.push_back(loss_sum / denom);
    history.accuracy.push_back(static_cast<double>(correct) / denom);
    if (cfg.on_epoch) cfg.on_epoch(epoch, history.loss.back(), history.accuracy.back());
  }
  net.set_mode(Mode::infer);
  return history;
}

/// Inference in fixed-size chunks; returns one row of outputs per sample.
template <class T>
Tensor<T> predict(const Network<T>& net, const Tensor<T>& inputs, std::size_t chunk = 256) {
  const std::size_t n = inputs.dim(0);
  Shape out_shape = net.output_shape();
  out_shape.insert(out_shape.begin(), n);
  Tensor<T> out(out_shape);
  const std::size_t per = element_count(net.output_shape());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor<T> y = net.infer(gather_rows(inputs, rows));
    std::copy(y.values().begin(), y.values().end(), out.data() + start * per);
  }
  return out;
}

/// Fraction of samples whose thresholded prediction matches the thresholded target.
template <class T>
double accuracy(const Network<T>& net, const Tensor<T>& inputs, const Tensor<T>& targets) {
  const Tensor<T> y = predict(net, inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += (y[i] >= T{0.5}) == (targets[i] >= T{0.5});
  return y.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(y.size());
}

}  // namespace wastesite::nn
