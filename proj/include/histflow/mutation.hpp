#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "histflow/error.hpp"
#include "histflow/random.hpp"
#include "histflow/stats.hpp"
#include "histflow/trait_space.hpp"

namespace histflow {

enum class KernelKind { gaussian, finite_jump, truncated_gaussian };

inline constexpr std::size_t kTruncationAttempts = 1'000'000;

/// Mutation kernel alpha_n(x, dh).
///   gaussian:           x + N(0, sigma^2 Id / n) on euclidean spaces
///   finite_jump:        row x of Q with the diagonal removed, renormalized
///   truncated_gaussian: gaussian step resampled until it lands in [lo, hi]
struct MutationKernel {
  KernelKind kind = KernelKind::gaussian;
  double sigma = 1.0;
  std::vector<double> jump;  // row-major, renormalized, zero diagonal
  std::size_t size = 0;

  static MutationKernel gaussian(double sigma) {
    if (!(sigma > 0.0)) fail(ErrorKind::invalid_config, "kernel sigma must be positive", "kernel.sigma");
    MutationKernel k;
    k.sigma = sigma;
    return k;
  }

  static MutationKernel truncated_gaussian(double sigma) {
    auto k = gaussian(sigma);
    k.kind = KernelKind::truncated_gaussian;
    return k;
  }

  static MutationKernel finite_jump(std::size_t m, std::vector<double> q) {
    if (q.size() != m * m) fail(ErrorKind::invalid_config, "jump matrix must be square", "kernel.matrix");
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double& v = q[i * m + j];
        if (!(v >= 0.0)) fail(ErrorKind::invalid_config, "jump matrix entries must be nonnegative", "kernel.matrix");
        if (i == j) v = 0.0;
        row += v;
      }
      if (!(row > 0.0))
        fail(ErrorKind::invalid_config,
             "jump matrix row " + std::to_string(i) + " has no mass off the diagonal", "kernel.matrix");
      for (std::size_t j = 0; j < m; ++j) q[i * m + j] /= row;
    }
    MutationKernel k;
    k.kind = KernelKind::finite_jump;
    k.size = m;
    k.jump = std::move(q);
    return k;
  }

  double jump_probability(std::size_t from, std::size_t to) const { return jump[from * size + to]; }

  void check_compatible(const TraitSpace& space) const {
    switch (kind) {
      case KernelKind::gaussian:
        if (space.kind() != SpaceKind::euclidean)
          fail(ErrorKind::invalid_config, "gaussian kernel needs a euclidean space", "kernel.kind");
        break;
      case KernelKind::truncated_gaussian:
        if (space.kind() != SpaceKind::interval)
          fail(ErrorKind::invalid_config, "truncated gaussian kernel needs an interval space", "kernel.kind");
        break;
      case KernelKind::finite_jump:
        if (space.kind() != SpaceKind::finite || space.size() != size)
          fail(ErrorKind::invalid_config, "jump matrix does not match the finite space", "kernel.matrix");
        break;
    }
  }
};

inline Trait sample_mutant(const MutationKernel& k, const TraitSpace& space, std::size_t n,
                           const Trait& x, Stream& rng) {
  const double scale = k.sigma / std::sqrt(static_cast<double>(n));
  switch (k.kind) {
    case KernelKind::gaussian: {
      Trait h = x;
      for (std::size_t i = 0; i < h.dim(); ++i) h[i] += scale * rng.normal();
      return h;
    }
    case KernelKind::truncated_gaussian: {
      for (std::size_t attempt = 0; attempt < kTruncationAttempts; ++attempt) {
        const double v = x[0] + scale * rng.normal();
        if (v >= space.lo() && v <= space.hi()) return Trait(v);
      }
      fail(ErrorKind::capacity, "truncated gaussian kernel exceeded its resampling cap");
    }
    case KernelKind::finite_jump: {
      const std::size_t from = x.label_index();
      double u = rng.uniform();
      std::size_t last = from;
      for (std::size_t j = 0; j < k.size; ++j) {
        const double w = k.jump_probability(from, j);
        if (w <= 0.0) continue;
        last = j;
        if (u < w) return Trait::label(j);
        u -= w;
      }
      return Trait::label(last);
    }
  }
  return x;
}

struct Offspring {
  Trait trait;
  bool mutant = false;
};

/// Draw from K^n(x, .) = p alpha_n(x, .) + (1 - p) delta_x.
inline Offspring sample_offspring_trait(const MutationKernel& k, const TraitSpace& space,
                                        std::size_t n, double p, const Trait& x, Stream& rng) {
  if (rng.bernoulli(p)) return {sample_mutant(k, space, n, x, rng), true};
  return {x, false};
}

/// Draw from (delta_x + K^n(x, .)) / 2.
inline Offspring sample_spine_jump(const MutationKernel& k, const TraitSpace& space, std::size_t n,
                                   double p, const Trait& x, Stream& rng) {
  if (rng.bernoulli(0.5 * p)) return {sample_mutant(k, space, n, x, rng), true};
  return {x, false};
}

enum class FunctionKind { constant, linear, square, sin, table };

/// Named scalar test function. On euclidean spaces linear, square and sin
/// act coordinatewise and are summed; table assigns a value per label.
struct TestFunction {
  FunctionKind kind = FunctionKind::sin;
  double value = 0.0;
  std::vector<double> table;

  double operator()(const Trait& x) const {
    switch (kind) {
      case FunctionKind::constant: return value;
      case FunctionKind::table: return table.at(x.label_index());
      default: break;
    }
    double acc = 0.0;
    for (double c : x.coords()) {
      switch (kind) {
        case FunctionKind::linear: acc += c; break;
        case FunctionKind::square: acc += c * c; break;
        case FunctionKind::sin: acc += std::sin(c); break;
        default: break;
      }
    }
    return acc;
  }

  /// Laplacian; zero for tables and constants.
  double laplacian(const Trait& x) const {
    switch (kind) {
      case FunctionKind::square: return 2.0 * static_cast<double>(x.dim());
      case FunctionKind::sin: {
        double acc = 0.0;
        for (double c : x.coords()) acc -= std::sin(c);
        return acc;
      }
      default: return 0.0;
    }
  }

  /// E[f(x + s Z)] - f(x) for Z standard normal in x.dim() coordinates,
  /// in closed form, for the coordinatewise kinds.
  double gaussian_increment(const Trait& x, double s) const {
    switch (kind) {
      case FunctionKind::constant:
      case FunctionKind::linear: return 0.0;
      case FunctionKind::square: return s * s * static_cast<double>(x.dim());
      case FunctionKind::sin: {
        double acc = 0.0;
        const double damp = std::expm1(-0.5 * s * s);
        for (double c : x.coords()) acc += std::sin(c) * damp;
        return acc;
      }
      case FunctionKind::table: break;
    }
    fail(ErrorKind::invalid_config, "table functions are only defined on finite spaces", "function.kind");
  }
};

struct Estimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// A^n f(x) = n * integral (f(h) - f(x)) alpha_n(x, dh).
///
/// finite_jump is summed exactly. gaussian with samples == 0 uses the
/// closed-form gaussian expectation (standard error 0); otherwise, and for
/// truncated_gaussian, the integral is a Monte Carlo average.
inline Estimate generator_apply(const MutationKernel& k, const TraitSpace& space, std::size_t n,
                                const TestFunction& f, const Trait& x, std::size_t samples,
                                Stream& rng) {
  const double nn = static_cast<double>(n);
  if (k.kind == KernelKind::finite_jump) {
    const auto from = x.label_index();
    const double fx = f(x);
    double acc = 0.0;
    for (std::size_t j = 0; j < k.size; ++j)
      if (j != from) acc += k.jump_probability(from, j) * (f(Trait::label(j)) - fx);
    return {nn * acc, 0.0};
  }
  if (k.kind == KernelKind::gaussian && samples == 0)
    return {nn * f.gaussian_increment(x, k.sigma / std::sqrt(nn)), 0.0};
  if (samples < 2) fail(ErrorKind::invalid_config, "Monte Carlo generator needs at least 2 samples", "samples");
  SampleMoments m;
  const double fx = f(x);
  for (std::size_t i = 0; i < samples; ++i) m.add(nn * (f(sample_mutant(k, space, n, x, rng)) - fx));
  return {m.mean(), m.standard_error()};
}

struct GeneratorRow {
  std::size_t n = 0;
  double sup_discrepancy = 0.0;
  double max_se = 0.0;
};

struct GeneratorReport {
  std::string function;
  std::vector<GeneratorRow> rows;
  /// Sup discrepancies strictly decrease in n beyond 3 combined standard
  /// errors at every step.
  bool converging = false;
};

using TargetFn = std::function<double(const Trait&)>;

/// Diffusion target (sigma^2 / 2) Laplacian f for gaussian kernels, zero
/// otherwise.
inline TargetFn default_generator_target(const MutationKernel& k, const TestFunction& f) {
  if (k.kind == KernelKind::finite_jump) return [](const Trait&) { return 0.0; };
  const double c = 0.5 * k.sigma * k.sigma;
  return [c, f](const Trait& x) { return c * f.laplacian(x); };
}

inline GeneratorReport generator_convergence_report(const MutationKernel& k, const TraitSpace& space,
                                                    const TestFunction& f, const TargetFn& target,
                                                    const std::vector<Trait>& grid,
                                                    const std::vector<std::size_t>& n_list,
                                                    std::size_t samples, Stream& rng) {
  if (grid.empty()) fail(ErrorKind::invalid_config, "generator grid must be nonempty", "grid");
  GeneratorReport report;
  for (std::size_t n : n_list) {
    GeneratorRow row{n, 0.0, 0.0};
    for (const auto& x : grid) {
      const auto est = generator_apply(k, space, n, f, x, samples, rng);
      row.sup_discrepancy = std::max(row.sup_discrepancy, std::abs(est.value - target(x)));
      row.max_se = std::max(row.max_se, est.standard_error);
    }
    report.rows.push_back(row);
  }
  report.converging = report.rows.size() >= 2;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    const auto& a = report.rows[i - 1];
    const auto& b = report.rows[i];
    if (!(a.sup_discrepancy - b.sup_discrepancy > 3.0 * std::hypot(a.max_se, b.max_se)))
      report.converging = false;
  }
  return report;
}

}  // namespace histflow
