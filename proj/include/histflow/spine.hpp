#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "histflow/lineage.hpp"
#include "histflow/model.hpp"
#include "histflow/mutation.hpp"
#include "histflow/random.hpp"

namespace histflow {

/// Time u >= 0 with integral_0^u (2 n r(t0 + s) + B_hi) ds = budget while
/// the path holds `x` since `since`. Constant and trait forms are constant
/// in s; the age form is clamped-linear and inverted piece by piece.
inline double invert_spine_hazard(const ModelConfig& cfg, double t0, const Trait& x, double since,
                                  double budget) {
  const double two_n = 2.0 * cfg.nd();
  const double Bb = cfg.bounds.b_hi;
  const auto& r = cfg.r;
  if (r.kind != RateKind::age || r.slope == 0.0)
    return budget / (two_n * r(cfg.space, t0, x, since) + Bb);

  // Clamped at `before` until the linear part enters [lo, hi], linear
  // until it leaves, clamped at `after` from then on.
  const double a = since + (r.lo - r.base) / r.slope;
  const double b = since + (r.hi - r.base) / r.slope;
  const double enter = std::min(a, b);
  const double leave = std::max(a, b);
  const double before = r.slope > 0 ? r.lo : r.hi;
  const double after = r.slope > 0 ? r.hi : r.lo;
  double t = t0;
  double left = budget;
  if (t < enter) {
    const double h = two_n * before + Bb;
    const double cap = h * (enter - t);
    if (left <= cap) return left / h;
    left -= cap;
    t = enter;
  }
  if (t < leave) {
    const double alpha = two_n * (r.base + r.slope * (t - since)) + Bb;
    const double beta = two_n * r.slope;
    const double span = leave - t;
    const double full = alpha * span + 0.5 * beta * span * span;
    if (left <= full) {
      const double disc = std::max(alpha * alpha + 2.0 * beta * left, 0.0);
      return t + 2.0 * left / (alpha + std::sqrt(disc)) - t0;
    }
    left -= full;
    t = leave;
  }
  return t + left / (two_n * after + Bb) - t0;
}

/// Spine Y^n and its time-changed companion with jumps at 2 n R_hi + B_hi.
/// Both use the same unit exponentials and destination sequence, so each
/// companion inter-jump time is at most the corresponding Y time.
struct SpinePair {
  Lineage y;
  Lineage ybar;
  std::size_t jumps_y = 0;
  std::size_t jumps_ybar = 0;
  std::vector<double> gaps_y;
  std::vector<double> gaps_ybar;
};

inline SpinePair spine_pair(const ModelConfig& cfg, const Trait& y0, double T, Stream& clock,
                            Stream& moves) {
  SpinePair out;
  const double bar_rate = 2.0 * cfg.nd() * cfg.bounds.r_hi + cfg.bounds.b_hi;
  std::vector<Trait> dest;
  auto destination = [&](std::size_t k, const Trait& from) -> const Trait& {
    while (dest.size() <= k)
      dest.push_back(sample_spine_jump(cfg.kernel, cfg.space, cfg.n, cfg.p, from, moves).trait);
    return dest[k];
  };

  std::vector<double> units;
  auto unit = [&](std::size_t k) {
    while (units.size() <= k) units.push_back(clock.exponential());
    return units[k];
  };

  // Y: state-dependent rate, destinations drawn from the current trait.
  out.y = Lineage::constant(y0);
  double t = 0.0;
  for (std::size_t k = 0;; ++k) {
    const LineageNode* tip = out.y.tip();
    const double gap = invert_spine_hazard(cfg, t, tip->trait, tip->piece_start->time, unit(k));
    if (t + gap > T) break;
    t += gap;
    out.gaps_y.push_back(gap);
    out.y = out.y.extended(t, destination(k, tip->trait));
    ++out.jumps_y;
  }

  // Ybar: rescaled unit exponentials, same destinations in order.
  out.ybar = Lineage::constant(y0);
  t = 0.0;
  for (std::size_t k = 0;; ++k) {
    const double gap = unit(k) / bar_rate;
    if (t + gap > T) break;
    t += gap;
    out.gaps_ybar.push_back(gap);
    const Trait from = out.ybar.tip_trait();
    out.ybar = out.ybar.extended(t, destination(k, from));
    ++out.jumps_ybar;
  }
  return out;
}

struct SpineSample {
  Lineage path;
  std::size_t jumps = 0;
};

/// Path under the spine law: rate 2 n r(t, y) + B_hi, destinations from
/// (delta + K^n) / 2. Trait-preserving jumps are kept as records.
inline SpineSample sample_spine(const ModelConfig& cfg, const Trait& y0, double T, Stream& rng) {
  SpineSample out;
  out.path = Lineage::constant(y0);
  double t = 0.0;
  while (true) {
    const LineageNode* tip = out.path.tip();
    t += invert_spine_hazard(cfg, t, tip->trait, tip->piece_start->time, rng.exponential());
    if (t > T) break;
    out.path = out.path.extended(t, sample_spine_jump(cfg.kernel, cfg.space, cfg.n, cfg.p, tip->trait, rng).trait);
    ++out.jumps;
  }
  return out;
}

/// Path under the dominating spine law: constant rate 2 n R_hi + B_hi.
inline SpineSample sample_dominating_spine(const ModelConfig& cfg, const Trait& y0, double T, Stream& rng) {
  SpineSample out;
  out.path = Lineage::constant(y0);
  const double rate = 2.0 * cfg.nd() * cfg.bounds.r_hi + cfg.bounds.b_hi;
  double t = 0.0;
  while (true) {
    t += rng.exponential(rate);
    if (t > T) break;
    const Trait from = out.path.tip_trait();
    out.path = out.path.extended(t, sample_spine_jump(cfg.kernel, cfg.space, cfg.n, cfg.p, from, rng).trait);
    ++out.jumps;
  }
  return out;
}

}  // namespace histflow
