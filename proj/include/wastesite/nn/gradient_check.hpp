#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wastesite/core/hash.hpp"
#include "wastesite/core/rng.hpp"
#include "wastesite/nn/network.hpp"
#include "wastesite/nn/train.hpp"

namespace wastesite::nn {

struct GradientCheckOptions {
  double step = 1e-3;
  /// Parameter coordinates sampled per parameter tensor.
  std::size_t per_tensor = 6;
  std::uint64_t seed = 0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates skipped because a perturbation crossed a ReLU or max-pool switch.
  std::size_t skipped = 0;
  std::string worst;
};

namespace detail {

/// Loss for the check: BCE at the logits for sigmoid-terminated networks, else 0.5*sum sq.
template <class U>
struct CheckedLoss {
  double value = 0.0;
  std::uint64_t pattern = 0;
};

template <class U>
std::uint64_t activation_pattern(const Tape<U>& tape, std::size_t first = 0, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (std::size_t k = first; k < tape.caches.size(); ++k) {
    for (const auto m : tape.caches[k].mask) h = (h ^ m) * 0x100000001B3ULL;
    for (const auto i : tape.caches[k].indices) h = (h ^ i) * 0x100000001B3ULL;
  }
  return h;
}

/// Where a perturbed coordinate's forward pass can restart: layer `first` sees `input`, and
/// the activation pattern of the layers before it hashes to `prefix`.
template <class U>
struct Restart {
  std::size_t first = 0;
  const Tensor<U>* input = nullptr;
  std::uint64_t prefix = 0xCBF29CE484222325ULL;
};

template <class U>
CheckedLoss<U> evaluate(const Network<U>& net, const Tensor<U>& x, const Tensor<U>& t,
                        Tape<U>* keep = nullptr, const Restart<U>& from = {}) {
  PassContext ctx;
  ctx.mode = Mode::train;
  ctx.dropout = false;
  Tape<U> tape;
  if (from.input) {
    tape.caches.resize(net.layer_count());
    tape.output = net.run_from(from.first, *from.input, ctx, &tape);
  } else {
    tape = net.record(x, ctx);
  }
  CheckedLoss<U> out;
  if (net.ends_with_sigmoid()) {
    const Tensor<U>& logits = tape.caches.back().input;
    for (std::size_t i = 0; i < logits.size(); ++i) out.value += bce_from_logit(logits[i], t[i]);
    out.value /= static_cast<double>(x.dim(0));
  } else {
    for (std::size_t i = 0; i < tape.output.size(); ++i) {
      const double d = tape.output[i] - t[i];
      out.value += 0.5 * d * d;
    }
  }
  out.pattern = activation_pattern(tape, from.first, from.prefix);
  if (keep) *keep = std::move(tape);
  return out;
}

}  // namespace detail

/// Compares backprop gradients with central differences on a float64 shadow of `net`.
/// Differences use Richardson extrapolation over steps h and h/2. A coordinate whose
/// perturbation flips an activation pattern is retried with h/10 and h/100, then resampled.
template <class T>
GradientCheckReport gradient_check(const Network<T>& net, const Tensor<T>& input,
                                   const Tensor<T>& target, GradientCheckOptions opt = {}) {
  Network<double> shadow = net.template cast<double>();
  const Tensor<double> x = input.template cast<double>();
  const Tensor<double> t = target.template cast<double>();

  Tape<double> tape;
  const auto base = detail::evaluate(shadow, x, t, &tape);
  Tensor<double> grad(tape.output.shape());
  std::size_t end = shadow.layer_count();
  if (shadow.ends_with_sigmoid()) {
    const Tensor<double>& logits = tape.caches.back().input;
    grad = Tensor<double>(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad[i] = (tape.output[i] - t[i]) / static_cast<double>(x.dim(0));
    }
    end -= 1;
  } else {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = tape.output[i] - t[i];
  }
  const auto analytic = shadow.backward(tape, grad, end);

  auto params = shadow.parameters();
  const auto names = shadow.state_names();
  CounterRng rng(opt.seed ^ 0xC0FFEEULL);
  GradientCheckReport report;
  const double h = opt.step;

  // A parameter only moves the layers from its own onward; re-run just those.
  std::vector<Tensor<double>> inputs{x};
  {
    PassContext ctx;
    ctx.mode = Mode::train;
    ctx.dropout = false;
    for (std::size_t l = 0; l + 1 < shadow.layer_count(); ++l) inputs.push_back(shadow.run_from(l, inputs[l], ctx, nullptr, l + 1));
  }
  std::vector<detail::Restart<double>> restart;
  std::uint64_t prefix = 0xCBF29CE484222325ULL;
  for (std::size_t l = 0; l < shadow.layer_count(); ++l) {
    for (std::size_t n = 0; n < shadow.layer(l).parameters().size(); ++n) restart.push_back({l, &inputs[l], prefix});
    for (const auto m : tape.caches[l].mask) prefix = (prefix ^ m) * 0x100000001B3ULL;
    for (const auto i : tape.caches[l].indices) prefix = (prefix ^ i) * 0x100000001B3ULL;
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    const std::size_t want = std::min(opt.per_tensor, p.size());
    std::size_t done = 0;
    for (std::size_t attempt = 0; done < want && attempt < want * 20; ++attempt) {
      const std::size_t i = want == p.size() && attempt < p.size()
                                ? attempt
                                : static_cast<std::size_t>(rng.below(p.size()));
      const double w0 = p[i];
      // A step that flips a ReLU or pooling switch is retried at a tenth of its size.
      std::optional<double> numeric;
      for (double step = h; !numeric && step >= h * 1e-2; step /= 10) {
        double f[4];
        bool kink = false;
        const double offsets[4] = {step, -step, step / 2, -step / 2};
        for (int s = 0; s < 4 && !kink; ++s) {
          p[i] = w0 + offsets[s];
          const auto r = detail::evaluate<double>(shadow, x, t, nullptr, restart[k]);
          f[s] = r.value;
          kink = r.pattern != base.pattern;
        }
        p[i] = w0;
        if (kink) continue;
        const double d_h = (f[0] - f[1]) / (2 * step);
        const double d_h2 = (f[2] - f[3]) / step;
        numeric = (4 * d_h2 - d_h) / 3;
      }
      if (!numeric) {
        ++report.skipped;
        continue;
      }
      const double a = analytic[k][i];
      const double rel = std::abs(a - *numeric) / std::max({std::abs(a), std::abs(*numeric), 1e-8});
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst = names[k] + "[" + std::to_string(i) + "]";
      }
      ++report.checked;
      ++done;
    }
  }
  return report;
}

}  // namespace wastesite::nn
