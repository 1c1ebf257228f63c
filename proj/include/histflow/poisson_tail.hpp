#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "histflow/error.hpp"
#include "histflow/model.hpp"

namespace histflow {

namespace detail {

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double log_poisson_pmf(double mu, double k) {
  return -mu + k * std::log(mu) - std::lgamma(k + 1.0);
}

// log sum_{j >= k} pmf(j) for k >= mu, summing upward until terms vanish.
inline double log_upper_sum(double mu, double k) {
  double log_term = log_poisson_pmf(mu, k);
  double acc = log_term;
  for (double j = k + 1.0;; j += 1.0) {
    log_term += std::log(mu / j);
    if (log_term < acc - 40.0) break;
    acc = log_sum_exp(acc, log_term);
  }
  return acc;
}

// log sum_{j <= k} pmf(j) for k < mu, summing downward.
inline double log_lower_sum(double mu, double k) {
  double log_term = log_poisson_pmf(mu, k);
  double acc = log_term;
  for (double j = k; j >= 1.0; j -= 1.0) {
    log_term += std::log(j / mu);
    if (log_term < acc - 40.0) break;
    acc = log_sum_exp(acc, log_term);
  }
  return acc;
}

}  // namespace detail

/// log P(Pois(mu) >= k), summed in log space so that neither the mean nor
/// the threshold can overflow.
inline double log_poisson_upper_tail(double mu, std::uint64_t k) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) fail(ErrorKind::domain, "Poisson mean must be finite and nonnegative");
  if (k == 0) return 0.0;
  if (mu == 0.0) return -std::numeric_limits<double>::infinity();
  const double kd = static_cast<double>(k);
  if (kd >= mu) return detail::log_upper_sum(mu, kd);
  const double lower = detail::log_lower_sum(mu, kd - 1.0);
  return std::log(-std::expm1(lower));
}

inline double poisson_upper_tail(double mu, std::uint64_t k) { return std::exp(log_poisson_upper_tail(mu, k)); }

struct PoissonTail {
  double lambda = 0.0;       // T (2 n R_hi + B_hi)
  double c = 0.0;            // B_hi / (2 R_lo)
  double mean = 0.0;         // lambda e^{c/n}
  std::uint64_t threshold = 0;  // ceil(A n)
  double log_tail = 0.0;     // log P(Pois(mean) >= threshold)
  double log_prefactor = 0.0;  // lambda (e^{c/n} - 1)
  double log_bound = 0.0;
  double tail = 0.0;
  double bound = 0.0;  // e^{lambda (e^{c/n} - 1)} P(Pois(mean) >= A n)
  bool tail_not_small = false;
  std::string warning;
};

/// Bound on E[e^{c N_T / n} 1{N_T > A n}] for N_T ~ Pois(lambda).
inline PoissonTail poisson_tail(std::size_t n, double T, const RateBounds& b, double A) {
  const double nd = static_cast<double>(n);
  if (!(A > 0.0) || !(A * nd >= 1.0)) fail(ErrorKind::domain, "poisson tail needs A > 0 and A n >= 1");
  if (!(T > 0.0)) fail(ErrorKind::domain, "poisson tail needs T > 0");
  PoissonTail out;
  out.lambda = T * (2.0 * nd * b.r_hi + b.b_hi);
  out.c = b.b_hi / (2.0 * b.r_lo);
  out.mean = out.lambda * std::exp(out.c / nd);
  out.threshold = static_cast<std::uint64_t>(std::ceil(A * nd));
  out.log_tail = log_poisson_upper_tail(out.mean, out.threshold);
  out.log_prefactor = out.lambda * std::expm1(out.c / nd);
  out.log_bound = out.log_prefactor + out.log_tail;
  out.tail = std::exp(out.log_tail);
  out.bound = std::exp(std::min(out.log_bound, std::log(std::numeric_limits<double>::max())));
  if (A <= 2.0 * out.lambda / nd) {
    out.tail_not_small = true;
    out.warning = "tail not small: A <= 2 lambda_n / n";
  }
  return out;
}

}  // namespace histflow
