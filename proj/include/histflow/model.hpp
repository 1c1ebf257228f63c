#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "histflow/error.hpp"
#include "histflow/lineage.hpp"
#include "histflow/mutation.hpp"
#include "histflow/random.hpp"
#include "histflow/trait_space.hpp"

namespace histflow {

enum class RateKind { constant, trait, age };

/// Bounded rate function of (t, y). The trait form depends on the
/// distance of y(t) to an anchor, the age form on the time since y last
/// changed value; both are clamped to [lo, hi].
struct RateForm {
  RateKind kind = RateKind::constant;
  double base = 0.0;
  double slope = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  Trait anchor;

  static RateForm constant(double v) {
    RateForm f;
    f.base = v;
    return f;
  }
  static RateForm trait(double base, double slope, Trait anchor, double lo, double hi) {
    RateForm f;
    f.kind = RateKind::trait;
    f.base = base;
    f.slope = slope;
    f.anchor = std::move(anchor);
    f.lo = lo;
    f.hi = hi;
    return f;
  }
  static RateForm age(double base, double slope, double lo, double hi) {
    RateForm f;
    f.kind = RateKind::age;
    f.base = base;
    f.slope = slope;
    f.lo = lo;
    f.hi = hi;
    return f;
  }

  bool is_constant() const noexcept { return kind == RateKind::constant; }

  /// `current` is y(t) and `since` the start of its constant piece.
  double operator()(const TraitSpace& space, double t, const Trait& current, double since) const {
    switch (kind) {
      case RateKind::constant: return base;
      case RateKind::trait:
        return std::clamp(base + slope * space.distance_unchecked(current, anchor), lo, hi);
      case RateKind::age: return std::clamp(base + slope * (t - since), lo, hi);
    }
    return base;
  }

  double at(const TraitSpace& space, double t, const Lineage& y) const {
    const auto node = y.ancestor_at(y.stop_time() ? std::min(t, *y.stop_time()) : t);
    return (*this)(space, t, node->trait, node->piece_start->time);
  }

  /// Closed range of attainable values, from the form alone.
  std::pair<double, double> range() const {
    if (kind == RateKind::constant) return {base, base};
    const double at0 = std::clamp(base, lo, hi);
    if (slope > 0) return {at0, hi};
    if (slope < 0) return {lo, at0};
    return {at0, at0};
  }
};

enum class InteractionKind { constant, gaussian_distance };

/// Competition kernel U(t, y, y'). The distance form is
/// amplitude * exp(-d(y(t), y'(t))^2 / (2 width^2)).
struct InteractionForm {
  InteractionKind kind = InteractionKind::constant;
  double amplitude = 0.0;
  double width = 1.0;

  static InteractionForm constant(double u) {
    InteractionForm f;
    f.amplitude = u;
    return f;
  }
  static InteractionForm gaussian_distance(double amplitude, double width) {
    InteractionForm f;
    f.kind = InteractionKind::gaussian_distance;
    f.amplitude = amplitude;
    f.width = width;
    return f;
  }

  bool is_constant() const noexcept { return kind == InteractionKind::constant; }
  bool is_zero() const noexcept { return amplitude == 0.0; }

  double operator()(const TraitSpace& space, const Trait& x, const Trait& other) const {
    if (kind == InteractionKind::constant) return amplitude;
    const double d = space.distance_unchecked(x, other);
    return amplitude * std::exp(-d * d / (2.0 * width * width));
  }
};

struct Lag {
  double lag = 0.0;
  double weight = 1.0;
};

struct RateBounds {
  double r_lo = 1.0;  // lower bound on r
  double r_hi = 1.0;  // upper bound on r
  double b_hi = 0.0;  // upper bound on b
  double d_hi = 0.0;  // upper bound on D
  double u_hi = 0.0;  // upper bound on U
};

struct ModelConfig {
  std::size_t n = 1;
  TraitSpace space = TraitSpace::euclidean(1);
  RateForm r = RateForm::constant(1.0);
  RateForm b = RateForm::constant(0.0);
  RateForm D = RateForm::constant(0.0);
  InteractionForm U = InteractionForm::constant(0.0);
  std::vector<Lag> lags{{0.0, 1.0}};
  double p = 0.0;
  MutationKernel kernel = MutationKernel::gaussian(1.0);
  double horizon = 1.0;
  RateBounds bounds;
  std::uint64_t event_cap = 10'000'000;

  double nd() const noexcept { return static_cast<double>(n); }
  double total_lag_weight() const noexcept {
    double w = 0.0;
    for (const auto& l : lags) w += l.weight;
    return w;
  }
  /// Per-individual birth band n R_hi + B_hi.
  double birth_majorant() const noexcept { return nd() * bounds.r_hi + bounds.b_hi; }
  /// Per-individual death band for running maximal mass m.
  double death_majorant(double max_mass) const noexcept {
    return nd() * bounds.r_hi + bounds.d_hi + bounds.u_hi * max_mass * total_lag_weight();
  }
};

namespace detail {

inline void check_range(const RateForm& f, double lo, double hi, const char* field) {
  if (f.kind != RateKind::constant && !(f.lo <= f.hi))
    fail(ErrorKind::invalid_config, "rate clamp requires lo <= hi", field);
  const auto [a, b] = f.range();
  if (!(a >= lo && b <= hi))
    fail(ErrorKind::invalid_config,
         std::string("rate values [") + std::to_string(a) + ", " + std::to_string(b) +
             "] leave the declared bounds [" + std::to_string(lo) + ", " + std::to_string(hi) + "]",
         field);
}

inline Trait probe_point(const TraitSpace& space, Stream& rng) {
  switch (space.kind()) {
    case SpaceKind::finite: return Trait::label(rng.index(space.size()));
    case SpaceKind::interval: return Trait(space.lo() + (space.hi() - space.lo()) * rng.uniform());
    case SpaceKind::euclidean: {
      std::vector<double> c(space.dim());
      for (auto& v : c) v = rng.normal() * std::pow(10.0, rng.uniform() * 6.0 - 2.0);
      return Trait(std::span<const double>(c));
    }
  }
  return Trait(0.0);
}

}  // namespace detail

/// Rejects configurations that break the rate bounds, analytically from
/// the forms and by random probing of (t, y) pairs.
inline void validate(const ModelConfig& cfg, std::size_t probes = 2000) {
  const auto& B = cfg.bounds;
  if (cfg.n < 1) fail(ErrorKind::invalid_config, "n must be at least 1", "model.n");
  if (!(B.r_lo > 0.0)) fail(ErrorKind::invalid_config, "lower bound on r must be positive", "model.bounds.r_lo");
  if (!(B.r_lo <= B.r_hi)) fail(ErrorKind::invalid_config, "r_lo must not exceed r_hi", "model.bounds.r_hi");
  if (!(B.b_hi >= 0.0 && B.d_hi >= 0.0 && B.u_hi >= 0.0) || !std::isfinite(B.r_hi + B.b_hi + B.d_hi + B.u_hi))
    fail(ErrorKind::invalid_config, "rate bounds must be finite and nonnegative", "model.bounds");
  if (!(cfg.p >= 0.0 && cfg.p <= 1.0))
    fail(ErrorKind::invalid_config, "mutation probability p must lie in [0,1], got " + std::to_string(cfg.p),
         "model.p");
  if (!(cfg.horizon > 0.0)) fail(ErrorKind::invalid_config, "horizon must be positive", "model.horizon");
  if (cfg.event_cap == 0) fail(ErrorKind::invalid_config, "event cap must be positive", "model.event_cap");
  for (const auto& l : cfg.lags)
    if (!(l.lag >= 0.0 && l.weight > 0.0 && std::isfinite(l.lag + l.weight)))
      fail(ErrorKind::invalid_config, "lags need lag >= 0 and weight > 0", "model.lags");
  cfg.kernel.check_compatible(cfg.space);
  for (const RateForm* f : {&cfg.r, &cfg.b, &cfg.D})
    if (f->kind == RateKind::trait) cfg.space.validate(f->anchor);

  detail::check_range(cfg.r, B.r_lo, B.r_hi, "model.r");
  detail::check_range(cfg.b, 0.0, B.b_hi, "model.b");
  detail::check_range(cfg.D, 0.0, B.d_hi, "model.D");
  if (!(cfg.U.amplitude >= 0.0 && cfg.U.amplitude <= B.u_hi))
    fail(ErrorKind::invalid_config, "interaction amplitude must lie in [0, u_hi]", "model.U");
  if (cfg.U.kind == InteractionKind::gaussian_distance && !(cfg.U.width > 0.0))
    fail(ErrorKind::invalid_config, "interaction width must be positive", "model.U.width");

  Stream rng(detail::fnv1a("validation-probe"));
  for (std::size_t i = 0; i < probes; ++i) {
    const double t = cfg.horizon * rng.uniform();
    const double since = t * rng.uniform();
    const Trait x = detail::probe_point(cfg.space, rng);
    const Trait x2 = detail::probe_point(cfg.space, rng);
    const double r = cfg.r(cfg.space, t, x, since);
    const double b = cfg.b(cfg.space, t, x, since);
    const double d = cfg.D(cfg.space, t, x, since);
    const double u = cfg.U(cfg.space, x, x2);
    if (!(r >= B.r_lo && r <= B.r_hi)) fail(ErrorKind::invalid_config, "probe found r outside its bounds", "model.r");
    if (!(b >= 0.0 && b <= B.b_hi)) fail(ErrorKind::invalid_config, "probe found b outside its bounds", "model.b");
    if (!(d >= 0.0 && d <= B.d_hi)) fail(ErrorKind::invalid_config, "probe found D outside its bounds", "model.D");
    if (!(u >= 0.0 && u <= B.u_hi)) fail(ErrorKind::invalid_config, "probe found U outside its bounds", "model.U");
  }
}

/// b^n(t, y) = n r(t, y) + b(t, y) for a trait and piece start.
inline double birth_rate_at(const ModelConfig& cfg, double t, const Trait& x, double since) {
  const double v = cfg.nd() * cfg.r(cfg.space, t, x, since) + cfg.b(cfg.space, t, x, since);
  const double lo = cfg.nd() * cfg.bounds.r_lo;
  if (!(v >= lo && v <= cfg.birth_majorant()))
    fail(ErrorKind::config_violation, "birth rate " + std::to_string(v) + " outside [n R_lo, n R_hi + B_hi]");
  return v;
}

inline double birth_rate(const ModelConfig& cfg, double t, const Lineage& y) {
  const auto node = y.ancestor_at(y.stop_time() ? std::min(t, *y.stop_time()) : t);
  return birth_rate_at(cfg, t, node->trait, node->piece_start->time);
}

/// n r(t, y) + D(t, y), the part of the death rate without interaction.
inline double intrinsic_death_rate_at(const ModelConfig& cfg, double t, const Trait& x, double since) {
  return cfg.nd() * cfg.r(cfg.space, t, x, since) + cfg.D(cfg.space, t, x, since);
}

enum class InitialKind { point, uniform_region, finite_list };

/// Law of the initial traits; the initial count is round(m0 n).
struct InitialLaw {
  InitialKind kind = InitialKind::point;
  double mass = 1.0;
  Trait point;
  CompactRegion region;
  std::vector<Trait> support;
  std::vector<double> weights;

  std::size_t count(std::size_t n) const {
    return static_cast<std::size_t>(std::llround(mass * static_cast<double>(n)));
  }

  void validate(const TraitSpace& space) const {
    if (!(mass >= 0.0 && std::isfinite(mass)))
      fail(ErrorKind::invalid_config, "initial mass must be finite and nonnegative", "initial.mass");
    switch (kind) {
      case InitialKind::point: space.validate(point); break;
      case InitialKind::uniform_region:
        region.check_compatible(space);
        if (region.kind == RegionKind::all_points && space.kind() != SpaceKind::finite)
          fail(ErrorKind::invalid_config, "uniform law needs a bounded region", "initial.region");
        break;
      case InitialKind::finite_list:
        if (support.empty() || support.size() != weights.size())
          fail(ErrorKind::invalid_config, "finite initial law needs matching support and weights",
               "initial.support");
        for (const auto& x : support) space.validate(x);
        for (double w : weights)
          if (!(w >= 0.0)) fail(ErrorKind::invalid_config, "initial weights must be nonnegative", "initial.weights");
        break;
    }
  }

  Trait sample(const TraitSpace& space, Stream& rng) const {
    switch (kind) {
      case InitialKind::point: return point;
      case InitialKind::finite_list: {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < support.size(); ++i) {
          if (u < weights[i]) return support[i];
          u -= weights[i];
        }
        return support.back();
      }
      case InitialKind::uniform_region: return sample_region(space, rng);
    }
    return point;
  }

 private:
  Trait sample_region(const TraitSpace& space, Stream& rng) const {
    if (space.kind() == SpaceKind::finite) {
      std::vector<std::size_t> inside;
      for (std::size_t i = 0; i < space.size(); ++i)
        if (region.contains_unchecked(space, Trait::label(i))) inside.push_back(i);
      if (inside.empty()) fail(ErrorKind::invalid_config, "initial region holds no points", "initial.region");
      return Trait::label(inside[rng.index(inside.size())]);
    }
    std::vector<double> c(space.dim());
    if (region.kind == RegionKind::box) {
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = region.lo[i] + (region.hi[i] - region.lo[i]) * rng.uniform();
      return Trait(std::span<const double>(c));
    }
    // Rejection from the bounding cube of the ball.
    for (std::size_t attempt = 0; attempt < kTruncationAttempts; ++attempt) {
      for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = region.center[i] + region.radius * (2.0 * rng.uniform() - 1.0);
      Trait x{std::span<const double>(c)};
      if (region.contains_unchecked(space, x) && space.contains(x)) return x;
    }
    fail(ErrorKind::capacity, "could not sample the initial region");
  }
};

}  // namespace histflow
