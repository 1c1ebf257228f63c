#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "histflow/error.hpp"
#include "histflow/model.hpp"
#include "histflow/random.hpp"
#include "histflow/simulator.hpp"
#include "histflow/spine.hpp"
#include "histflow/stats.hpp"

namespace histflow {

/// Same model without competition and extra deaths: D = 0, U = 0, and
/// optionally b = B_hi, so the death rate is n r.
inline ModelConfig dominate(const ModelConfig& cfg, bool replace_b = true) {
  ModelConfig out = cfg;
  out.D = RateForm::constant(0.0);
  out.U = InteractionForm::constant(0.0);
  if (replace_b) out.b = RateForm::constant(cfg.bounds.b_hi);
  out.bounds.d_hi = 0.0;
  out.bounds.u_hi = 0.0;
  return out;
}

enum class CoupledEventKind : std::uint8_t {
  joint_birth,      // birth in both populations
  thinned_birth,    // companion birth from a base parent, rejected by the base
  companion_birth,  // birth from a parent outside the base
  joint_death,
  companion_death,  // death of an atom outside the base
  base_death,       // base-only death mark
};

inline const char* to_string(CoupledEventKind k) {
  switch (k) {
    case CoupledEventKind::joint_birth: return "joint_birth";
    case CoupledEventKind::thinned_birth: return "thinned_birth";
    case CoupledEventKind::companion_birth: return "companion_birth";
    case CoupledEventKind::joint_death: return "joint_death";
    case CoupledEventKind::companion_death: return "companion_death";
    case CoupledEventKind::base_death: return "base_death";
  }
  return "unknown";
}

struct CoupledEvent {
  double time = 0.0;
  CoupledEventKind kind = CoupledEventKind::joint_death;
  std::uint64_t label = 0;
  std::uint64_t child = 0;
  std::size_t base_count = 0;
  std::size_t companion_count = 0;
};

/// Base process and its dominating companion from one random stream.
struct CoupledRun {
  EventLog base;
  EventLog companion;
  std::vector<CoupledEvent> correspondence;
  PopulationState base_final;
  PopulationState companion_final;
  /// Subset audit: checks performed (one per event) and failures, where a
  /// failure is a base atom missing from the companion or carrying a
  /// different lineage.
  std::uint64_t audits = 0;
  std::uint64_t violations = 0;
};

struct CouplingOptions {
  bool replace_b = true;
  bool audit = true;
};

/// Joint thinning. Each companion atom proposes at
/// (n R_hi + B_hi) + (n R_hi + D_hi + U_hi M W), M the running maximal base
/// mass. In the birth band u < b_companion is a companion birth, taken
/// into the base iff the parent is in the base and u < b_base. In the
/// death band du < n r kills in both; a base atom with
/// n r <= du < d_base dies in the base only, its interaction term taken
/// from the base's own history.
inline CoupledRun run_dominating_coupling(const ModelConfig& cfg, const PopulationState& initial, Stream& rng,
                                          const CouplingOptions& options = {}) {
  const ModelConfig dom = dominate(cfg, options.replace_b);
  const double T = cfg.horizon;
  const double birth_band = cfg.birth_majorant();

  CoupledRun run;
  PopulationState base = initial;
  PopulationState comp = initial;
  run.base.n = run.companion.n = cfg.n;
  run.base.initial = run.companion.initial = initial.atoms;
  run.base.initial_next_label = run.companion.initial_next_label = initial.next_label;

  AtomIndex base_index, comp_index;
  base_index.rebuild(base.atoms);
  comp_index.rebuild(comp.atoms);
  InteractionField field;
  field.reset(cfg, base.atoms);
  double max_base_mass = base.mass();

  auto audit = [&] {
    ++run.audits;
    for (const auto& a : base.atoms) {
      if (!comp_index.contains(a.label) || !(comp.atoms[comp_index.at(a.label)].lineage == a.lineage)) {
        ++run.violations;
        return;
      }
    }
  };
  if (options.audit) audit();

  double t = initial.time;
  std::uint64_t events = 0;
  Event ev;
  while (!comp.atoms.empty()) {
    const double death_band = cfg.death_majorant(max_base_mass);
    const double lambda = birth_band + death_band;
    t += rng.exponential(lambda * static_cast<double>(comp.atoms.size()));
    if (t > T) break;
    const std::size_t i = rng.index(comp.atoms.size());
    const double u = rng.uniform() * lambda;
    const Atom& atom = comp.atoms[i];
    const std::uint64_t label = atom.label;
    const LineageNode* tip = atom.lineage.tip();
    const double since = tip->piece_start->time;
    const bool in_base = base_index.contains(label);
    CoupledEvent ce{t, CoupledEventKind::joint_death, label, 0, 0, 0};

    ev.time = t;
    ev.label = label;
    ev.majorant = lambda;
    if (u < birth_band) {
      const double bd = birth_rate_at(dom, t, tip->trait, since);
      if (!(u < bd)) continue;
      double bb = 0.0;
      if (in_base) {
        bb = cfg.nd() * cfg.r(cfg.space, t, tip->trait, since) + cfg.b(cfg.space, t, tip->trait, since);
        if (bb > bd * (1.0 + 1e-12))
          fail(ErrorKind::coupling_violation, "base birth rate " + std::to_string(bb) +
                                                  " exceeds the dominating birth rate " + std::to_string(bd));
      }
      auto off = sample_offspring_trait(cfg.kernel, cfg.space, cfg.n, cfg.p, tip->trait, rng);
      ev.kind = off.mutant ? EventKind::birth_mutant : EventKind::birth_clone;
      ev.child = comp.next_label++;
      ev.trait = off.trait;
      ev.uniform = u;
      ev.rate = bd;
      Lineage child = atom.lineage.extended(t, std::move(off.trait));
      run.companion.events.push_back(ev);
      ce.child = ev.child;
      if (in_base && u < bb) {
        ce.kind = CoupledEventKind::joint_birth;
        ev.rate = bb;
        run.base.events.push_back(ev);
        base_index.add(base.atoms, {ev.child, child});
        base.next_label = comp.next_label;
        field.on_birth(t, ev.child, ev.trait);
        max_base_mass = std::max(max_base_mass, base.mass());
      } else {
        ce.kind = in_base ? CoupledEventKind::thinned_birth : CoupledEventKind::companion_birth;
      }
      comp_index.add(comp.atoms, {ev.child, std::move(child)});
    } else {
      const double du = u - birth_band;
      const double dd = intrinsic_death_rate_at(dom, t, tip->trait, since);
      ev.kind = EventKind::death;
      ev.child = 0;
      ev.trait = Trait();
      ev.uniform = du;
      if (du < dd) {
        ev.rate = dd;
        run.companion.events.push_back(ev);
        if (in_base) {
          ce.kind = CoupledEventKind::joint_death;
          const double base_intrinsic = intrinsic_death_rate_at(cfg, t, tip->trait, since);
          if (base_intrinsic < dd * (1.0 - 1e-12))
            fail(ErrorKind::coupling_violation, "base death rate falls below the dominating death rate");
          run.base.events.push_back(ev);
          base_index.remove(base.atoms, base_index.at(label));
          field.on_death(t, label);
        } else {
          ce.kind = CoupledEventKind::companion_death;
        }
        comp_index.remove(comp.atoms, i);
      } else {
        if (!in_base) continue;
        double db = intrinsic_death_rate_at(cfg, t, tip->trait, since);
        if (!(du < db)) db += field.interaction(t, tip->trait, base.atoms);
        if (db > death_band * (1.0 + 1e-12)) fail(ErrorKind::config_violation, "death rate exceeds its majorant");
        if (!(du < db)) continue;
        ev.rate = db;
        ce.kind = CoupledEventKind::base_death;
        run.base.events.push_back(ev);
        base_index.remove(base.atoms, base_index.at(label));
        field.on_death(t, label);
      }
    }
    if (++events > cfg.event_cap)
      fail(ErrorKind::capacity, "event cap of " + std::to_string(cfg.event_cap) + " exceeded");
    base.time = comp.time = t;
    ce.base_count = base.count();
    ce.companion_count = comp.count();
    run.correspondence.push_back(ce);
    if (options.audit) audit();
  }
  base.time = comp.time = T;
  run.base.end_time = run.companion.end_time = T;
  run.base_final = std::move(base);
  run.companion_final = std::move(comp);
  return run;
}

/// Piecewise constant, right-continuous mass path.
struct MassPath {
  std::vector<double> times;
  std::vector<double> masses;

  double at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return masses.empty() ? 0.0 : masses.front();
    return masses[static_cast<std::size_t>(it - times.begin()) - 1];
  }
  double infimum() const { return masses.empty() ? 0.0 : *std::min_element(masses.begin(), masses.end()); }
};

/// Model with birth n r, death n r + D0, no competition.
inline ModelConfig minorizing_config(const ModelConfig& cfg, double D0) {
  if (!(D0 >= 0.0) || !std::isfinite(D0))
    fail(ErrorKind::invalid_config, "D0 must be finite and nonnegative", "D0");
  ModelConfig out = cfg;
  out.b = RateForm::constant(0.0);
  out.D = RateForm::constant(D0);
  out.U = InteractionForm::constant(0.0);
  out.bounds.b_hi = 0.0;
  out.bounds.d_hi = D0;
  out.bounds.u_hi = 0.0;
  return out;
}

/// Upper limit 4 R_lo / (T R_hi) on the death shift.
inline double minorizing_limit(const RateBounds& b, double T) { return 4.0 * b.r_lo / (T * b.r_hi); }

/// Empty when D0 respects the limit.
inline std::string minorizing_warning(const ModelConfig& cfg, double D0) {
  const double limit = minorizing_limit(cfg.bounds, cfg.horizon);
  if (D0 < limit) return {};
  return "D0 = " + std::to_string(D0) + " is not below 4 R_lo / (T R_hi) = " + std::to_string(limit);
}

namespace detail {

struct MassRecorder {
  MassPath* path;
  double stop_below = -1.0;  // stop once mass <= stop_below
  bool stopped = false;

  void on_start(const PopulationState& s) {
    path->times.push_back(s.time);
    path->masses.push_back(s.mass());
    stopped = s.mass() <= stop_below;
  }
  void on_event(const PopulationState& s, const Event&) {
    path->times.push_back(s.time);
    path->masses.push_back(s.mass());
    if (s.mass() <= stop_below) stopped = true;
  }
  void on_end(const PopulationState&) {}
  bool done() const { return stopped; }
};

}  // namespace detail

struct MinorizingRun {
  MassPath mass;
  std::string warning;
};

/// Total mass of the minorizing process started from `start` (typically
/// the sub-population outside K at the stopping time) on
/// [start.time, cfg.horizon].
inline MinorizingRun run_minorizing(const ModelConfig& cfg, const PopulationState& start, double D0, Stream& rng) {
  const ModelConfig z = minorizing_config(cfg, D0);
  MinorizingRun out;
  out.warning = minorizing_warning(cfg, D0);
  PopulationState s = start;
  detail::MassRecorder rec{&out.mass};
  simulate(z, s, rng, rec);
  return out;
}

/// Keeps the atoms whose lineage satisfies `keep`, e.g. paths outside K.
template <class Pred>
PopulationState restrict_population(const PopulationState& s, Pred keep) {
  PopulationState out;
  out.time = s.time;
  out.n = s.n;
  out.next_label = s.next_label;
  for (const auto& a : s.atoms)
    if (keep(a)) out.atoms.push_back(a);
  return out;
}

struct SurvivalEstimate {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double estimate = 0.0;
  Interval ci;
  std::string warning;
};

/// P(inf_{s <= T} <Z_s, 1> > eps / 2) for the minorizing process started
/// from `start` (mass at least eps) at time 0. Replicate k uses stream
/// (seed, k, "survival").
inline SurvivalEstimate estimate_survival(const ModelConfig& cfg, const InitialLaw& start, double D0, double eps,
                                          double T, std::size_t replicates, std::uint64_t seed) {
  if (!(eps > 0.0)) fail(ErrorKind::invalid_config, "epsilon must be positive", "epsilon");
  const double start_mass = static_cast<double>(start.count(cfg.n)) / cfg.nd();
  if (!(start_mass >= eps * (1.0 - 1e-12)))
    fail(ErrorKind::invalid_config, "start mass must be at least epsilon", "initial.mass");
  ModelConfig c = cfg;
  c.horizon = T;
  const ModelConfig z = minorizing_config(c, D0);
  SurvivalEstimate out;
  out.warning = minorizing_warning(c, D0);
  out.trials = replicates;
  for (std::size_t k = 0; k < replicates; ++k) {
    Stream init = derive_stream(seed, k, "survival-initial");
    Stream rng = derive_stream(seed, k, "survival");
    PopulationState s = make_initial(z, start, init);
    MassPath path;
    detail::MassRecorder rec{&path, 0.5 * eps};
    simulate(z, s, rng, rec);
    if (!rec.stopped) ++out.successes;
  }
  out.estimate = replicates ? static_cast<double>(out.successes) / static_cast<double>(replicates) : 0.0;
  out.ci = wilson_interval(out.successes, out.trials);
  return out;
}

/// Spine pair with clock and destination streams derived from the seed.
inline SpinePair spine_pair(const ModelConfig& cfg, const Trait& y0, double T, std::uint64_t seed,
                            std::uint64_t replicate) {
  Stream clock = derive_stream(seed, replicate, "spine-clock");
  Stream moves = derive_stream(seed, replicate, "spine-moves");
  return spine_pair(cfg, y0, T, clock, moves);
}

}  // namespace histflow
