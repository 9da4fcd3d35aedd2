#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace wastesite {

/// Counter-based generator: the n-th draw is a pure function of (key, stream, n).
/// Instances are cheap values owned by whoever needs randomness.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key, std::uint64_t stream = 0) noexcept
      : key_(key), stream_(stream) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Random-access draw; does not advance the counter.
  static constexpr std::uint64_t at(std::uint64_t key, std::uint64_t stream,
                                    std::uint64_t counter) noexcept {
    return mix(mix(key + 0x9E3779B97F4A7C15ULL * (stream + 1)) ^
               (counter * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  }

  static constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t next_u64() noexcept { return at(key_, stream_, counter_++); }

  /// Uniform on [0, 1).
  constexpr double uniform() noexcept { return to_unit(next_u64()); }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n).
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    if (n == 0) return 0;
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  /// Independent child stream; parent state is untouched.
  constexpr CounterRng fork(std::uint64_t stream) const noexcept {
    return CounterRng(mix(key_ ^ mix(stream_ + 0x632BE59BD9B4E019ULL)), stream);
  }

  template <class U>
  void shuffle(std::span<U> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace wastesite
