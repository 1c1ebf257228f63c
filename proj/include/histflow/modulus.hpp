#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "histflow/error.hpp"
#include "histflow/lineage.hpp"
#include "histflow/trait_space.hpp"

namespace histflow {

/// Collapsed value function of a lineage stopped at a horizon: values
/// v_0..v_J with v_j attained on [s_j, s_{j+1}), s_0 = 0. Consecutive
/// values differ. Value pointers borrow from the lineage, which must
/// outlive the path.
struct StepPath {
  std::vector<double> jumps;  // s_1..s_J in (0, horizon]
  std::vector<const Trait*> values;
  double horizon = 0.0;

  std::size_t jump_count() const noexcept { return jumps.size(); }
  /// Jumps strictly before the horizon.
  std::size_t interior_jumps() const noexcept {
    return (!jumps.empty() && jumps.back() >= horizon) ? jumps.size() - 1 : jumps.size();
  }
  double jump_time(std::size_t run) const noexcept { return run == 0 ? 0.0 : jumps[run - 1]; }
  double run_end(std::size_t run) const noexcept {
    return run < jumps.size() ? jumps[run] : std::numeric_limits<double>::infinity();
  }
};

/// Walks piece starts only, so the cost is linear in the number of value
/// changes rather than in the number of records.
inline void build_step_path(const Lineage& y, double horizon, StepPath& out) {
  double limit = horizon;
  if (y.stop_time()) limit = std::min(limit, *y.stop_time());
  const LineageNode* node = y.tip();
  while (node->time > limit) node = node->parent.get();
  out.jumps.clear();
  out.values.clear();
  out.horizon = horizon;
  for (const LineageNode* p = node->piece_start;;) {
    out.values.push_back(&p->trait);
    if (!p->parent) break;
    out.jumps.push_back(p->time);
    p = p->parent->piece_start;
  }
  std::reverse(out.values.begin(), out.values.end());
  std::reverse(out.jumps.begin(), out.jumps.end());
}

inline StepPath step_path(const Lineage& y, double horizon) {
  StepPath p;
  build_step_path(y, horizon, p);
  return p;
}

/// Diameter of {v_first..v_last} by pairwise distances.
inline double run_diameter(const TraitSpace& space, const StepPath& path,
                           std::size_t first, std::size_t last) {
  double d = 0.0;
  for (std::size_t a = first; a <= last; ++a)
    for (std::size_t b = a + 1; b <= last; ++b)
      d = std::max(d, space.distance_unchecked(*path.values[a], *path.values[b]));
  return d;
}

/// Largest oscillation over the intervals of `partition`, or nullopt if
/// the partition is not admissible (t_0 = 0, spacing > delta,
/// t_{n-1} < T <= t_n).
inline std::optional<double> partition_oscillation(const TraitSpace& space, const StepPath& path,
                                                   const std::vector<double>& partition,
                                                   double delta) {
  const double T = path.horizon;
  if (partition.size() < 2 || partition.front() != 0.0) return std::nullopt;
  const auto n = partition.size() - 1;
  if (!(partition[n - 1] < T) || !(partition[n] >= T)) return std::nullopt;
  double worst = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double a = partition[i - 1];
    const double b = partition[i];
    if (!(b - a > delta)) return std::nullopt;
    const auto first = static_cast<std::size_t>(
        std::upper_bound(path.jumps.begin(), path.jumps.end(), a) - path.jumps.begin());
    const auto last = static_cast<std::size_t>(
        std::lower_bound(path.jumps.begin(), path.jumps.end(), b) - path.jumps.begin());
    worst = std::max(worst, run_diameter(space, path, first, last));
  }
  return worst;
}

struct ModulusResult {
  double value = 0.0;
  std::vector<double> partition;
};

inline void check_modulus_query(double delta, double horizon) {
  if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::domain, "delta must lie in (0,1)");
  if (!(horizon > 0.0)) fail(ErrorKind::domain, "horizon must be positive");
}

/// Exact w'(x, delta, T) for step paths.
///
/// For a threshold c, feasibility is decided left to right over runs:
/// start[k] is the infimum start of an interval beginning in run k. An
/// interval from run k may extend over runs k..m while their diameter is
/// <= c, and is closed either exactly at the jump s_{m+1} or inside run m
/// at max(start[k] + delta, s_m). The final interval ends at T, which
/// excludes a jump at T, when start + delta < T, and beyond T otherwise.
/// The optimum is among the run diameters, found by binary search.
///
/// Holds scratch buffers; reuse one solver per thread to avoid allocation.
class ModulusSolver {
 public:
  bool feasible(const TraitSpace& space, const StepPath& path, double delta, double c) {
    return run(space, path, delta, c);
  }

  ModulusResult solve(const TraitSpace& space, const StepPath& path, double delta) {
    ModulusResult out;
    const double T = path.horizon;
    if (path.jumps.empty()) {
      out.partition = {0.0, T > delta ? T : T + delta};
      return out;
    }
    collect_candidates(space, path);
    std::size_t lo = 0;
    std::size_t hi = candidates_.size() - 1;  // the full diameter is always feasible
    while (lo < hi) {
      const auto mid = lo + (hi - lo) / 2;
      if (run(space, path, delta, candidates_[mid]))
        hi = mid;
      else
        lo = mid + 1;
    }
    out.value = candidates_[lo];
    run(space, path, delta, out.value);
    out.partition = witness(path, delta);
    return out;
  }

 private:
  enum : std::uint8_t { kClean, kInside };

  struct Tracker {
    const TraitSpace* space;
    const StepPath* path;
    std::size_t first;
    double lo, hi, diam;

    void reset(std::size_t k) {
      first = k;
      diam = 0.0;
      if (space->is_scalar()) lo = hi = (*path->values[k])[0];
    }
    double grow(std::size_t m) {
      if (space->is_scalar()) {
        const double x = (*path->values[m])[0];
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        diam = hi - lo;
      } else {
        for (std::size_t a = first; a < m; ++a)
          diam = std::max(diam, space->distance_unchecked(*path->values[a], *path->values[m]));
      }
      return diam;
    }
  };

  void collect_candidates(const TraitSpace& space, const StepPath& path) {
    const auto runs = path.values.size();
    candidates_.clear();
    Tracker tr{&space, &path, 0, 0, 0, 0};
    for (std::size_t k = 0; k < runs; ++k) {
      tr.reset(k);
      candidates_.push_back(0.0);
      for (std::size_t m = k + 1; m < runs; ++m) candidates_.push_back(tr.grow(m));
    }
    std::sort(candidates_.begin(), candidates_.end());
    candidates_.erase(std::unique(candidates_.begin(), candidates_.end()), candidates_.end());
  }

  bool run(const TraitSpace& space, const StepPath& path, double delta, double c) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double T = path.horizon;
    const std::size_t J = path.jumps.size();
    const std::size_t Jp = path.interior_jumps();
    start_.assign(J + 1, inf);
    from_.assign(J + 1, 0);
    how_.assign(J + 1, kClean);
    start_[0] = 0.0;
    final_ = -1;
    Tracker tr{&space, &path, 0, 0, 0, 0};
    for (std::size_t k = 0; k <= Jp; ++k) {
      const double ek = start_[k];
      if (ek == inf) continue;
      const double reach = ek + delta;
      const std::size_t last = reach < T ? Jp : J;
      tr.reset(k);
      for (std::size_t m = k; m <= last; ++m) {
        if (m > k && tr.grow(m) > c) break;
        if (m == last) {
          final_ = static_cast<std::int64_t>(k);
          return true;
        }
        if (m + 1 <= Jp) {
          const double s = path.jumps[m];
          if (s > reach && s < start_[m + 1]) {
            start_[m + 1] = s;
            from_[m + 1] = k;
            how_[m + 1] = kClean;
          }
        }
        if (m > k) {
          const double pos = std::max(reach, path.jump_time(m));
          if (pos < path.run_end(m) && pos < T && pos < start_[m]) {
            start_[m] = pos;
            from_[m] = k;
            how_[m] = kInside;
          }
        }
      }
    }
    return false;
  }

  // Rebuilds concrete breakpoints from the last successful run. Infimum
  // positions are shifted right by a fraction of the smallest slack so
  // every strict inequality holds.
  std::vector<double> witness(const StepPath& path, double delta) {
    const double T = path.horizon;
    chain_.clear();
    for (auto k = static_cast<std::size_t>(final_); k != 0; k = from_[k]) chain_.push_back(k);
    std::reverse(chain_.begin(), chain_.end());

    double slack = std::numeric_limits<double>::infinity();
    double prev = 0.0;
    for (auto k : chain_) {
      if (how_[k] == kClean)
        slack = std::min(slack, path.jumps[k - 1] - (prev + delta));
      else
        slack = std::min(slack, std::min(path.run_end(k), T) - start_[k]);
      prev = start_[k];
    }
    const bool ends_at_T = prev + delta < T;
    if (ends_at_T) slack = std::min(slack, T - (prev + delta));
    const double eta = slack / (2.0 * static_cast<double>(chain_.size() + 1));

    std::vector<double> part{0.0};
    double actual = 0.0;
    for (auto k : chain_) {
      if (how_[k] == kClean) {
        actual = path.jumps[k - 1];
      } else {
        const double base = std::max(actual + delta, path.jump_time(k));
        double v = base + eta;
        if (!(v > base)) v = std::nextafter(base, std::numeric_limits<double>::infinity());
        actual = v;
      }
      part.push_back(actual);
    }
    part.push_back(ends_at_T ? T : std::max(T, actual + 2.0 * delta));
    return part;
  }

  std::vector<double> start_;
  std::vector<std::size_t> from_;
  std::vector<std::uint8_t> how_;
  std::vector<double> candidates_;
  std::vector<std::size_t> chain_;
  std::int64_t final_ = -1;
};

inline ModulusResult modulus(const TraitSpace& space, const Lineage& y, double delta, double T) {
  check_modulus_query(delta, T);
  const auto path = step_path(y, T);
  ModulusSolver solver;
  return solver.solve(space, path, delta);
}

/// True iff w'(y, delta, T) <= c, without computing the exact value.
inline bool modulus_at_most(const TraitSpace& space, const Lineage& y, double delta, double T,
                            double c) {
  check_modulus_query(delta, T);
  const auto path = step_path(y, T);
  if (path.jumps.empty()) return c >= 0.0;
  ModulusSolver solver;
  return solver.feasible(space, path, delta, c);
}

}  // namespace histflow
