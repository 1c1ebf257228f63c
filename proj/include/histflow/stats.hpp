#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace histflow {

/// Sample moments up to order four. Accumulation is in insertion order,
/// so identical input sequences give bit-identical results.
class SampleMoments {
 public:
  void add(double x) {
    ++n_;
    s1_ += x;
    s2_ += x * x;
    values_.push_back(x);
  }

  std::size_t count() const { return n_; }
  double mean() const { return n_ ? s1_ / static_cast<double>(n_) : 0.0; }

  /// Unbiased sample variance.
  double variance() const {
    if (n_ < 2) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double v : values_) acc += (v - m) * (v - m);
    return acc / static_cast<double>(n_ - 1);
  }

  double standard_error() const {
    return n_ ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

  /// Central fourth moment (biased).
  double central_moment4() const {
    if (n_ == 0) return 0.0;
    const double m = mean();
    double acc = 0.0;
    for (double v : values_) {
      const double d = (v - m) * (v - m);
      acc += d * d;
    }
    return acc / static_cast<double>(n_);
  }

  /// Large-sample standard error of the sample variance,
  /// sqrt((mu4 - sigma^4) / n).
  double variance_standard_error() const {
    if (n_ < 2) return 0.0;
    const double s2 = variance();
    const double q = central_moment4() - s2 * s2;
    return std::sqrt(std::max(q, 0.0) / static_cast<double>(n_));
  }

  std::span<const double> values() const { return values_; }

 private:
  std::size_t n_ = 0;
  double s1_ = 0.0;
  double s2_ = 0.0;
  std::vector<double> values_;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for a binomial proportion; z = 1.96 gives 95%.
inline Interval wilson_interval(std::size_t successes, std::size_t trials,
                                double z = 1.96) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (phat + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Empirical quantile, type 1 (inverse of the empirical CDF).
inline double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

/// |a - b| <= k * sqrt(se_a^2 + se_b^2)
inline bool within_combined_se(double a, double se_a, double b, double se_b,
                               double k = 3.0) {
  return std::abs(a - b) <= k * std::hypot(se_a, se_b);
}

}  // namespace histflow
