#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace histflow {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Counter-based random stream. Output i of a stream with key k is
/// mix64(k + (i + 1) * golden), i.e. SplitMix64 started at k.
///
/// Stream keys are derived as
///   key = mix64(mix64(seed ^ mix64(index + golden)) ^ fnv1a(tag))
/// which is cheap to reproduce in any language. Identical
/// (seed, index, tag) triples give identical streams.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) noexcept : key_(key), state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  std::uint64_t key() const noexcept { return key_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_open_left() noexcept {
    return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
  }

  double exponential(double rate) noexcept {
    return -std::log(uniform_open_left()) / rate;
  }

  /// Unit exponential variate.
  double exponential() noexcept { return -std::log(uniform_open_left()); }

  /// Standard normal via Box-Muller; one variate per call.
  double normal() noexcept {
    const double u1 = uniform_open_left();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n) noexcept {
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  /// Poisson variate by Knuth's product method. Large means are split
  /// into independent chunks, so cost is linear in the mean.
  std::uint64_t poisson(double mean) noexcept {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
      const double limit = std::exp(-mean);
      double prod = uniform_open_left();
      std::uint64_t k = 0;
      while (prod > limit) {
        prod *= uniform_open_left();
        ++k;
      }
      return k;
    }
    // Split a large mean into independent chunks.
    std::uint64_t total = 0;
    double remaining = mean;
    while (remaining >= 30.0) {
      total += poisson(25.0);
      remaining -= 25.0;
    }
    return total + poisson(remaining);
  }

 private:
  std::uint64_t key_;
  std::uint64_t state_;
};

inline std::uint64_t stream_key(std::uint64_t master_seed,
                                std::uint64_t replicate,
                                std::string_view role) noexcept {
  using detail::mix64;
  return mix64(mix64(master_seed ^ mix64(replicate + detail::kGolden)) ^
               detail::fnv1a(role));
}

inline Stream derive_stream(std::uint64_t master_seed, std::uint64_t replicate,
                            std::string_view role) noexcept {
  return Stream(stream_key(master_seed, replicate, role));
}

}  // namespace histflow
