#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "histflow/compact_set.hpp"
#include "histflow/error.hpp"
#include "histflow/modulus.hpp"
#include "histflow/parallel.hpp"
#include "histflow/random.hpp"
#include "histflow/simulator.hpp"
#include "histflow/spine.hpp"
#include "histflow/stats.hpp"

namespace histflow {

/// Marks atoms whose lineage lies in a path set that is inherited by
/// offspring (a child of a marked parent is marked) and tracks the marked
/// mass at every event. Lineages do not change while an atom lives, so a
/// mark is decided once, at birth; clone children copy the parent's mark
/// and only mutant children are tested.
template <class Test>
class MarkedMass {
 public:
  MarkedMass(Test test, double threshold) : test_(std::move(test)), threshold_(threshold) {}

  void on_start(const PopulationState& s) {
    marked_.clear();
    count_ = 0;
    crossed_ = std::numeric_limits<double>::infinity();
    max_mass_ = 0.0;
    for (const auto& a : s.atoms) set(a.label, test_(a.lineage));
    check(s);
  }

  void on_event(const PopulationState& s, const Event& e) {
    if (e.is_birth()) {
      const bool parent = is_marked(e.label);
      bool child = parent;
      if (!parent && e.kind == EventKind::birth_mutant) child = test_(s.atoms.back().lineage);
      set(e.child, child);
    } else if (is_marked(e.label)) {
      --count_;
      marked_[e.label] = 0;
    }
    check(s);
  }

  void on_end(const PopulationState& s) { final_mass_ = mass(s); }

  /// First event time at which the marked mass exceeded the threshold;
  /// infinity if it never did.
  double first_crossing() const noexcept { return crossed_; }
  bool crossed() const noexcept { return std::isfinite(crossed_); }
  double final_mass() const noexcept { return final_mass_; }
  double max_mass() const noexcept { return max_mass_; }
  std::size_t marked_count() const noexcept { return count_; }

 private:
  bool is_marked(std::uint64_t label) const { return label < marked_.size() && marked_[label]; }
  void set(std::uint64_t label, bool m) {
    if (label >= marked_.size()) marked_.resize(std::max<std::size_t>(label + 1, marked_.size() * 2), 0);
    marked_[label] = m;
    if (m) ++count_;
  }
  double mass(const PopulationState& s) const {
    return static_cast<double>(count_) / static_cast<double>(s.n);
  }
  void check(const PopulationState& s) {
    const double m = mass(s);
    max_mass_ = std::max(max_mass_, m);
    if (m > threshold_ && !crossed()) crossed_ = s.time;
  }

  Test test_;
  double threshold_;
  std::vector<char> marked_;
  std::size_t count_ = 0;
  double crossed_ = std::numeric_limits<double>::infinity();
  double max_mass_ = 0.0;
  double final_mass_ = 0.0;
};

struct ContainmentRow {
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::size_t crossings = 0;
  double probability = 0.0;
  Interval ci;
  /// E[X_T((K^T)^c)]
  double escape_mass = 0.0;
  double escape_mass_se = 0.0;
  /// First crossing time per replicate, infinity when never crossed.
  std::vector<double> first_crossing;
};

struct ContainmentReport {
  double epsilon = 0.0;
  std::vector<ContainmentRow> rows;
};

/// Observer marking atoms whose path lies outside K.
inline auto outside_marker(const TraitSpace& space, const CompactSetSpec& K) {
  auto tester = std::make_shared<CompactSetTester>();
  return [&space, &K, tester](const Lineage& y) { return !tester->contains(space, y, K, K.horizon); };
}

/// P(exists t <= T: X_t(K_T^c) > eps) per configuration, plus the terminal
/// escape mass. Replicate k of config j uses streams (seed, k, "containment-<n>").
inline ContainmentReport containment_probability(const std::vector<ModelConfig>& cfgs, const InitialLaw& initial,
                                                 const CompactSetSpec& K, double eps, std::size_t replicates,
                                                 std::uint64_t seed, unsigned workers = 1) {
  if (!(eps > 0.0)) fail(ErrorKind::invalid_config, "epsilon must be positive", "epsilon");
  ContainmentReport report;
  report.epsilon = eps;
  for (const auto& cfg : cfgs) {
    if (K.horizon != cfg.horizon)
      fail(ErrorKind::invalid_config, "compact set horizon must equal the model horizon", "K.horizon");
    K.validate(cfg.space);
    const std::string tag = "containment-" + std::to_string(cfg.n);
    ContainmentRow row;
    row.n = cfg.n;
    row.replicates = replicates;
    row.first_crossing.assign(replicates, 0.0);
    std::vector<double> escape(replicates, 0.0);
    for_each_replicate(
        replicates,
        [&](std::size_t k) {
          Stream init = derive_stream(seed, k, tag + "-initial");
          Stream rng = derive_stream(seed, k, tag);
          PopulationState s = make_initial(cfg, initial, init);
          MarkedMass obs(outside_marker(cfg.space, K), eps);
          simulate(cfg, s, rng, obs);
          row.first_crossing[k] = obs.first_crossing();
          escape[k] = obs.final_mass();
        },
        workers);
    SampleMoments m;
    for (std::size_t k = 0; k < replicates; ++k) {
      if (std::isfinite(row.first_crossing[k])) ++row.crossings;
      m.add(escape[k]);
    }
    row.probability = replicates ? static_cast<double>(row.crossings) / static_cast<double>(replicates) : 0.0;
    row.ci = wilson_interval(row.crossings, replicates);
    row.escape_mass = m.mean();
    row.escape_mass_se = m.standard_error();
    report.rows.push_back(std::move(row));
  }
  return report;
}

struct MomentRow {
  std::size_t n = 0;
  double first = 0.0;
  double first_se = 0.0;
  double second = 0.0;
  double second_se = 0.0;
};

struct MomentReport {
  std::vector<MomentRow> rows;
  /// Some later n exceeds an earlier n by more than 3 combined standard
  /// errors in either moment.
  bool trend_up = false;
};

namespace detail {
struct MaxMass {
  double max = 0.0;
  void on_start(const PopulationState& s) { max = s.mass(); }
  void on_event(const PopulationState& s, const Event&) { max = std::max(max, s.mass()); }
  void on_end(const PopulationState&) {}
};
}  // namespace detail

/// E[sup_t <X_t, 1>] and E[sup_t <X_t, 1>^2] per configuration; the mass
/// only changes at events, so the supremum is taken over event times.
inline MomentReport sup_mass_moments(const std::vector<ModelConfig>& cfgs, const InitialLaw& initial,
                                     std::size_t replicates, std::uint64_t seed, unsigned workers = 1) {
  MomentReport report;
  for (const auto& cfg : cfgs) {
    const std::string tag = "moments-" + std::to_string(cfg.n);
    std::vector<double> sup(replicates, 0.0);
    for_each_replicate(
        replicates,
        [&](std::size_t k) {
          Stream init = derive_stream(seed, k, tag + "-initial");
          Stream rng = derive_stream(seed, k, tag);
          PopulationState s = make_initial(cfg, initial, init);
          detail::MaxMass obs;
          simulate(cfg, s, rng, obs);
          sup[k] = obs.max;
        },
        workers);
    SampleMoments m1, m2;
    for (double v : sup) {
      m1.add(v);
      m2.add(v * v);
    }
    report.rows.push_back({cfg.n, m1.mean(), m1.standard_error(), m2.mean(), m2.standard_error()});
  }
  for (std::size_t i = 0; i < report.rows.size(); ++i)
    for (std::size_t j = i + 1; j < report.rows.size(); ++j) {
      const auto& a = report.rows[i];
      const auto& b = report.rows[j];
      if (b.first - a.first > 3.0 * std::hypot(a.first_se, b.first_se) ||
          b.second - a.second > 3.0 * std::hypot(a.second_se, b.second_se))
        report.trend_up = true;
    }
  return report;
}

struct ExceedanceRow {
  double t0 = 0.0;
  std::size_t crossings = 0;
  std::size_t replicates = 0;
  double probability = 0.0;
  Interval ci;
};

struct ExceedanceReport {
  double tau = 0.0;
  double epsilon = 0.0;
  std::vector<ExceedanceRow> rows;  // in the order of the t0 list
  /// Estimates nonincreasing as t0 decreases, up to overlapping intervals.
  bool monotone = true;
};

namespace detail {

// w'(y, delta, T) >= tau, tested as infeasibility of w' <= below_tau.
struct ModulusTest {
  const TraitSpace* space;
  double delta;
  double below_tau;
  double T;
  StepPath path{};
  ModulusSolver solver{};

  bool operator()(const Lineage& y) {
    build_step_path(y, T, path);
    return !solver.feasible(*space, path, delta, below_tau);
  }
};

struct ExceedanceObserver {
  std::vector<MarkedMass<ModulusTest>> marks;
  void on_start(const PopulationState& s) {
    for (auto& m : marks) m.on_start(s);
  }
  void on_event(const PopulationState& s, const Event& e) {
    for (auto& m : marks) m.on_event(s, e);
  }
  void on_end(const PopulationState& s) {
    for (auto& m : marks) m.on_end(s);
  }
  bool done() const {
    return std::all_of(marks.begin(), marks.end(), [](const auto& m) { return m.crossed(); });
  }
};

}  // namespace detail

/// P(exists t <= T: X_t({y: w'(y, t0, t) >= tau}) > eps) for each t0.
///
/// For a fixed lineage w'(y^t, t0, t) is constant once t exceeds its last
/// jump, and a lineage does not change while its atom is alive, so each
/// atom is classified once at birth; offspring of an exceeding atom exceed.
/// All t0 values share the same simulated runs.
inline ExceedanceReport modulus_exceedance(const ModelConfig& cfg, const InitialLaw& initial, double tau,
                                           const std::vector<double>& t0s, double eps, std::size_t replicates,
                                           std::uint64_t seed, unsigned workers = 1) {
  if (!(tau > 0.0)) fail(ErrorKind::invalid_config, "tau must be positive", "tau");
  for (double t0 : t0s)
    if (!(t0 > 0.0 && t0 < 1.0)) fail(ErrorKind::invalid_config, "t0 values must lie in (0,1)", "t0");
  const double T = cfg.horizon;
  const double below_tau = std::nextafter(tau, 0.0);
  std::vector<std::vector<char>> crossed(t0s.size(), std::vector<char>(replicates, 0));
  for_each_replicate(
      replicates,
      [&](std::size_t k) {
        Stream init = derive_stream(seed, k, "modulus-initial");
        Stream rng = derive_stream(seed, k, "modulus");
        PopulationState s = make_initial(cfg, initial, init);
        detail::ExceedanceObserver obs;
        for (double t0 : t0s) obs.marks.emplace_back(detail::ModulusTest{&cfg.space, t0, below_tau, T}, eps);
        simulate(cfg, s, rng, obs);
        for (std::size_t j = 0; j < t0s.size(); ++j) crossed[j][k] = obs.marks[j].crossed();
      },
      workers);
  ExceedanceReport report;
  report.tau = tau;
  report.epsilon = eps;
  for (std::size_t j = 0; j < t0s.size(); ++j) {
    ExceedanceRow row;
    row.t0 = t0s[j];
    row.replicates = replicates;
    for (char c : crossed[j]) row.crossings += c ? 1 : 0;
    row.probability = replicates ? static_cast<double>(row.crossings) / static_cast<double>(replicates) : 0.0;
    row.ci = wilson_interval(row.crossings, replicates);
    report.rows.push_back(row);
  }
  // Sort by t0 and require that a smaller t0 never sits above a larger one
  // with disjoint intervals.
  std::vector<ExceedanceRow> sorted = report.rows;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.t0 < b.t0; });
  for (std::size_t i = 0; i < sorted.size(); ++i)
    for (std::size_t j = i + 1; j < sorted.size(); ++j)
      if (sorted[i].ci.lo > sorted[j].ci.hi) report.monotone = false;
  return report;
}

struct CalibrationOptions {
  /// Split 1 - q evenly over the grid points and the region (Bonferroni),
  /// so that a fresh spine path escapes with probability at most about
  /// 1 - q. Off: every constraint uses the plain q-quantile.
  bool bonferroni = true;
  std::vector<double> grid = CompactSetSpec::default_grid();
};

struct Calibration {
  CompactSetSpec K;
  double level = 0.0;  // quantile level used per constraint
  std::size_t samples = 0;
};

/// Compact set from dominating spine paths started at y0: envelope(delta_j)
/// is a quantile of w'(path, delta_j, T), Gamma_T the ball around y0 whose
/// radius is a quantile of the largest distance reached from y0. The
/// envelope is made nondecreasing in delta by a running maximum.
inline Calibration calibrate_envelope(const ModelConfig& cfg, const Trait& y0, double T, double q,
                                      std::size_t samples, std::uint64_t seed,
                                      const CalibrationOptions& options = {}) {
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::invalid_config, "quantile level must lie in (0,1)", "q");
  if (samples == 0) fail(ErrorKind::invalid_config, "need at least one spine sample", "samples");
  std::vector<double> grid = options.grid;
  std::sort(grid.begin(), grid.end());
  for (double d : grid)
    if (!(d > 0.0 && d < 1.0)) fail(ErrorKind::invalid_config, "grid deltas must lie in (0,1)", "grid");
  cfg.space.validate(y0);
  check_modulus_query(0.5, T);

  Calibration out;
  out.samples = samples;
  const double k = static_cast<double>(grid.size() + 1);
  out.level = options.bonferroni ? 1.0 - (1.0 - q) / k : q;

  std::vector<std::vector<double>> w(grid.size(), std::vector<double>(samples));
  std::vector<double> reach(samples);
  StepPath path;
  ModulusSolver solver;
  for (std::size_t i = 0; i < samples; ++i) {
    Stream rng = derive_stream(seed, i, "calibrate");
    const auto s = sample_dominating_spine(cfg, y0, T, rng);
    build_step_path(s.path, T, path);
    double far = 0.0;
    for (const Trait* v : path.values) far = std::max(far, cfg.space.distance_unchecked(y0, *v));
    reach[i] = far;
    for (std::size_t j = 0; j < grid.size(); ++j) w[j][i] = solver.solve(cfg.space, path, grid[j]).value;
  }
  out.K.horizon = T;
  out.K.region = CompactRegion::ball(y0, empirical_quantile(reach, out.level));
  double running = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    running = std::max(running, empirical_quantile(w[j], out.level));
    out.K.envelope.push_back({grid[j], running});
  }
  return out;
}

/// Pointwise maximum of calibrated sets sharing horizon, centre and grid.
inline CompactSetSpec merge_compact_sets(const std::vector<CompactSetSpec>& sets) {
  if (sets.empty()) fail(ErrorKind::invalid_config, "nothing to merge", "K");
  CompactSetSpec out = sets.front();
  for (const auto& s : sets) {
    if (s.horizon != out.horizon || s.envelope.size() != out.envelope.size() ||
        s.region.kind != RegionKind::ball || out.region.kind != RegionKind::ball ||
        !(s.region.center == out.region.center))
      fail(ErrorKind::invalid_config, "compact sets are not comparable", "K");
    out.region.radius = std::max(out.region.radius, s.region.radius);
    for (std::size_t j = 0; j < s.envelope.size(); ++j) {
      if (s.envelope[j].delta != out.envelope[j].delta)
        fail(ErrorKind::invalid_config, "compact sets use different grids", "K");
      out.envelope[j].bound = std::max(out.envelope[j].bound, s.envelope[j].bound);
    }
  }
  return out;
}

/// Fraction of fresh dominating spine paths outside K.
inline Estimate spine_escape_probability(const ModelConfig& cfg, const Trait& y0, const CompactSetSpec& K,
                                         std::size_t samples, std::uint64_t seed) {
  CompactSetTester tester;
  SampleMoments m;
  for (std::size_t i = 0; i < samples; ++i) {
    Stream rng = derive_stream(seed, i, "spine-escape");
    const auto s = sample_dominating_spine(cfg, y0, K.horizon, rng);
    m.add(tester.contains(cfg.space, s.path, K, K.horizon) ? 0.0 : 1.0);
  }
  return {m.mean(), m.standard_error()};
}

}  // namespace histflow
