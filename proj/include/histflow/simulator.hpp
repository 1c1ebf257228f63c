#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "histflow/compact_set.hpp"
#include "histflow/error.hpp"
#include "histflow/lineage.hpp"
#include "histflow/model.hpp"
#include "histflow/mutation.hpp"
#include "histflow/random.hpp"

namespace histflow {

struct Atom {
  std::uint64_t label = 0;
  Lineage lineage;
};

/// Alive individuals at `time`; each carries weight 1/n.
struct PopulationState {
  double time = 0.0;
  std::size_t n = 1;
  std::vector<Atom> atoms;
  std::uint64_t next_label = 0;

  std::size_t count() const noexcept { return atoms.size(); }
  double mass() const noexcept { return static_cast<double>(atoms.size()) / static_cast<double>(n); }
};

inline PopulationState make_population(std::size_t n, const std::vector<Trait>& traits) {
  PopulationState s;
  s.n = n;
  for (const auto& x : traits) s.atoms.push_back({s.next_label++, Lineage::constant(x)});
  return s;
}

inline PopulationState make_initial(const ModelConfig& cfg, const InitialLaw& law, Stream& rng) {
  law.validate(cfg.space);
  std::vector<Trait> traits;
  const auto count = law.count(cfg.n);
  traits.reserve(count);
  for (std::size_t i = 0; i < count; ++i) traits.push_back(law.sample(cfg.space, rng));
  return make_population(cfg.n, traits);
}

enum class EventKind : std::uint8_t { birth_clone, birth_mutant, death };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::birth_clone: return "birth_clone";
    case EventKind::birth_mutant: return "birth_mutant";
    case EventKind::death: return "death";
  }
  return "unknown";
}

/// Accepted event with its thinning audit: the proposal used the
/// per-individual majorant, the band-relative uniform was below `rate`.
struct Event {
  double time = 0.0;
  EventKind kind = EventKind::death;
  std::uint64_t label = 0;  // parent for births, the deceased for deaths
  std::uint64_t child = 0;
  Trait trait;              // child trait for births
  double majorant = 0.0;
  double rate = 0.0;
  double uniform = 0.0;

  bool is_birth() const noexcept { return kind != EventKind::death; }
};

struct EventLog {
  std::size_t n = 1;
  std::vector<Atom> initial;
  std::uint64_t initial_next_label = 0;
  std::vector<Event> events;
  /// The log is complete on [0, end_time].
  double end_time = 0.0;
};

/// Swap-remove container keyed by label; removal order is part of the
/// simulated state, so replays must use the same container.
class AtomIndex {
 public:
  void rebuild(const std::vector<Atom>& atoms) {
    pos_.clear();
    for (std::size_t i = 0; i < atoms.size(); ++i) set(atoms[i].label, i);
  }
  std::size_t at(std::uint64_t label) const {
    if (label >= pos_.size() || pos_[label] < 0) fail(ErrorKind::history_incomplete, "unknown atom label");
    return static_cast<std::size_t>(pos_[label]);
  }
  bool contains(std::uint64_t label) const noexcept { return label < pos_.size() && pos_[label] >= 0; }
  void set(std::uint64_t label, std::size_t i) {
    if (label >= pos_.size()) pos_.resize(std::max<std::size_t>(label + 1, pos_.size() * 2), -1);
    pos_[label] = static_cast<std::int64_t>(i);
  }
  void add(std::vector<Atom>& atoms, Atom a) {
    set(a.label, atoms.size());
    atoms.push_back(std::move(a));
  }
  void remove(std::vector<Atom>& atoms, std::size_t i) {
    const auto label = atoms[i].label;
    if (i + 1 != atoms.size()) {
      atoms[i] = std::move(atoms.back());
      set(atoms[i].label, i);
    }
    atoms.pop_back();
    pos_[label] = -1;
  }

 private:
  std::vector<std::int64_t> pos_;
};

/// Evaluates sum_k w_k 1{s_k <= t} (1/n) sum_{y' alive at (t - s_k)-} U(y, y')
/// during a simulation. Lag 0 reads the current population; positive lags
/// keep a delayed copy advanced through the change log as t grows, which
/// is valid because death candidates are evaluated at increasing times.
class InteractionField {
 public:
  void reset(const ModelConfig& cfg, const std::vector<Atom>& initial) {
    cfg_ = &cfg;
    changes_.clear();
    offset_ = 0;
    delayed_.clear();
    for (const auto& l : cfg.lags) {
      Delayed d;
      d.lag = l.lag;
      d.weight = l.weight;
      for (const auto& a : initial) d.add(a.label, a.lineage.tip_trait(), cfg.U.is_constant());
      delayed_.push_back(std::move(d));
    }
    any_delay_ = std::any_of(cfg.lags.begin(), cfg.lags.end(), [](const Lag& l) { return l.lag > 0.0; });
  }

  void on_birth(double t, std::uint64_t child, const Trait& trait) {
    if (any_delay_) changes_.push_back({t, child, true, cfg_->U.is_constant() ? Trait() : trait});
  }
  void on_death(double t, std::uint64_t label) {
    if (any_delay_) changes_.push_back({t, label, false, Trait()});
  }

  double interaction(double t, const Trait& x, const std::vector<Atom>& current) {
    const auto& U = cfg_->U;
    if (U.is_zero()) return 0.0;
    double total = 0.0;
    for (auto& d : delayed_) {
      if (d.lag > t) continue;
      double inner = 0.0;
      if (d.lag == 0.0) {
        if (U.is_constant())
          inner = U.amplitude * static_cast<double>(current.size());
        else
          for (const auto& a : current) inner += U(cfg_->space, x, a.lineage.tip_trait());
      } else {
        advance(d, t - d.lag);
        if (U.is_constant())
          inner = U.amplitude * static_cast<double>(d.count);
        else
          for (const auto& y : d.traits) inner += U(cfg_->space, x, y);
      }
      total += d.weight * inner;
    }
    compact();
    return total / cfg_->nd();
  }

 private:
  struct Change {
    double time;
    std::uint64_t label;
    bool birth;
    Trait trait;
  };

  struct Delayed {
    double lag = 0.0;
    double weight = 0.0;
    std::size_t cursor = 0;  // absolute index into the change log
    std::size_t count = 0;
    std::vector<Trait> traits;
    std::vector<std::uint64_t> labels;
    std::vector<std::int64_t> pos;

    void add(std::uint64_t label, const Trait& x, bool counts_only) {
      ++count;
      if (counts_only) return;
      if (label >= pos.size()) pos.resize(std::max<std::size_t>(label + 1, pos.size() * 2), -1);
      pos[label] = static_cast<std::int64_t>(traits.size());
      traits.push_back(x);
      labels.push_back(label);
    }
    void remove(std::uint64_t label, bool counts_only) {
      --count;
      if (counts_only) return;
      const auto i = static_cast<std::size_t>(pos[label]);
      traits[i] = std::move(traits.back());
      labels[i] = labels.back();
      pos[labels[i]] = static_cast<std::int64_t>(i);
      traits.pop_back();
      labels.pop_back();
      pos[label] = -1;
    }
  };

  // Applies all changes strictly before `until`.
  void advance(Delayed& d, double until) {
    const bool counts_only = cfg_->U.is_constant();
    while (d.cursor - offset_ < changes_.size()) {
      const auto& c = changes_[d.cursor - offset_];
      if (!(c.time < until)) break;
      if (c.birth)
        d.add(c.label, c.trait, counts_only);
      else
        d.remove(c.label, counts_only);
      ++d.cursor;
    }
  }

  // Drops changes consumed by every delayed copy.
  void compact() {
    if (!any_delay_ || changes_.size() < 4096) return;
    std::size_t low = std::numeric_limits<std::size_t>::max();
    for (const auto& d : delayed_)
      if (d.lag > 0.0) low = std::min(low, d.cursor);
    const auto drop = low - offset_;
    if (drop * 2 < changes_.size()) return;
    changes_.erase(changes_.begin(), changes_.begin() + static_cast<std::ptrdiff_t>(drop));
    offset_ = low;
  }

  const ModelConfig* cfg_ = nullptr;
  std::vector<Change> changes_;
  std::size_t offset_ = 0;
  std::vector<Delayed> delayed_;
  bool any_delay_ = false;
};

/// Observer with no-op hooks; derive or duck-type to add behaviour. An
/// observer with a `bool done()` member stops the run early; the state is
/// then left at the time of the last event.
struct NullObserver {
  void on_start(const PopulationState&) {}
  void on_event(const PopulationState&, const Event&) {}
  void on_end(const PopulationState&) {}
};

struct SimulationSummary {
  std::uint64_t events = 0;
  std::uint64_t proposals = 0;
  double max_mass = 0.0;
};

/// Exact simulation of X^n on [state.time, cfg.horizon] by thinning.
///
/// Every individual proposes events at the constant majorant
/// Lambda = (n R_hi + B_hi) + (n R_hi + D_hi + U_hi M W), M the running
/// maximal mass and W the total lag weight. A proposal draws u uniform on
/// [0, Lambda): the first band accepts a birth when u < b^n, the second a
/// death when u - (n R_hi + B_hi) < d^n. Since the population is constant
/// between events, this samples the time-inhomogeneous rates exactly.
template <class Observer = NullObserver>
SimulationSummary simulate(const ModelConfig& cfg, PopulationState& state, Stream& rng,
                           Observer& obs, EventLog* log = nullptr) {
  const double T = cfg.horizon;
  const double birth_band = cfg.birth_majorant();
  AtomIndex index;
  index.rebuild(state.atoms);
  InteractionField field;
  field.reset(cfg, state.atoms);
  if (log) {
    log->n = cfg.n;
    log->initial = state.atoms;
    log->initial_next_label = state.next_label;
    log->events.clear();
  }
  SimulationSummary summary;
  summary.max_mass = state.mass();
  obs.on_start(state);

  double t = state.time;
  Event ev;
  while (!state.atoms.empty()) {
    const double lambda = birth_band + cfg.death_majorant(summary.max_mass);
    t += rng.exponential(lambda * static_cast<double>(state.atoms.size()));
    if (t > T) break;
    ++summary.proposals;
    const std::size_t i = rng.index(state.atoms.size());
    const double u = rng.uniform() * lambda;
    const Atom& atom = state.atoms[i];
    const LineageNode* tip = atom.lineage.tip();
    const double since = tip->piece_start->time;

    if (u < birth_band) {
      const double b = birth_rate_at(cfg, t, tip->trait, since);
      if (!(u < b)) continue;
      auto off = sample_offspring_trait(cfg.kernel, cfg.space, cfg.n, cfg.p, tip->trait, rng);
      ev.kind = off.mutant ? EventKind::birth_mutant : EventKind::birth_clone;
      ev.label = atom.label;
      ev.child = state.next_label++;
      ev.rate = b;
      ev.uniform = u;
      ev.trait = off.trait;
      Lineage child = atom.lineage.extended(t, std::move(off.trait));
      index.add(state.atoms, {ev.child, std::move(child)});
      field.on_birth(t, ev.child, ev.trait);
    } else {
      const double du = u - birth_band;
      const double intrinsic = intrinsic_death_rate_at(cfg, t, tip->trait, since);
      if (!(du < intrinsic)) {
        const double d = intrinsic + field.interaction(t, tip->trait, state.atoms);
        if (d > (lambda - birth_band) * (1.0 + 1e-12))
          fail(ErrorKind::config_violation, "death rate exceeds its majorant");
        if (!(du < d)) continue;
        ev.rate = d;
      } else {
        ev.rate = intrinsic;
      }
      ev.kind = EventKind::death;
      ev.label = atom.label;
      ev.child = 0;
      ev.uniform = du;
      ev.trait = Trait();
      index.remove(state.atoms, i);
      field.on_death(t, ev.label);
    }
    ev.time = t;
    ev.majorant = lambda;
    state.time = t;
    if (++summary.events > cfg.event_cap)
      fail(ErrorKind::capacity, "event cap of " + std::to_string(cfg.event_cap) + " exceeded");
    summary.max_mass = std::max(summary.max_mass, state.mass());
    if (log) log->events.push_back(ev);
    obs.on_event(state, ev);
    if constexpr (requires { obs.done(); }) {
      if (obs.done()) {
        if (log) log->end_time = t;
        obs.on_end(state);
        return summary;
      }
    }
  }
  state.time = T;
  if (log) log->end_time = T;
  obs.on_end(state);
  return summary;
}

inline SimulationSummary simulate(const ModelConfig& cfg, PopulationState& state, Stream& rng,
                                  EventLog* log = nullptr) {
  NullObserver obs;
  return simulate(cfg, state, rng, obs, log);
}

/// Reapplies a log to its initial population, up to and including events
/// at times <= until.
inline PopulationState replay(const EventLog& log,
                              double until = std::numeric_limits<double>::infinity()) {
  PopulationState s;
  s.n = log.n;
  s.atoms = log.initial;
  s.next_label = log.initial_next_label;
  AtomIndex index;
  index.rebuild(s.atoms);
  for (const auto& e : log.events) {
    if (e.time > until) break;
    const std::size_t i = index.at(e.label);
    if (e.is_birth()) {
      Lineage child = s.atoms[i].lineage.extended(e.time, e.trait);
      index.add(s.atoms, {e.child, std::move(child)});
      s.next_label = std::max(s.next_label, e.child + 1);
    } else {
      index.remove(s.atoms, i);
    }
    s.time = e.time;
  }
  s.time = std::min(until, log.end_time);
  return s;
}

/// Alive individuals at tau-, i.e. after all events strictly before tau.
inline std::vector<Atom> alive_before(const EventLog& log, double tau) {
  if (tau > log.end_time)
    fail(ErrorKind::history_incomplete, "history ends before the requested time");
  std::vector<Atom> atoms = log.initial;
  AtomIndex index;
  index.rebuild(atoms);
  for (const auto& e : log.events) {
    if (!(e.time < tau)) break;
    const std::size_t i = index.at(e.label);
    if (e.is_birth())
      index.add(atoms, {e.child, atoms[i].lineage.extended(e.time, e.trait)});
    else
      index.remove(atoms, i);
  }
  return atoms;
}

/// d^n(t, y, X) with the interaction integral evaluated against past
/// populations reconstructed from the log. The log must cover [0, t).
inline double death_rate(const ModelConfig& cfg, double t, const Lineage& y, const EventLog& history) {
  if (t > history.end_time)
    fail(ErrorKind::history_incomplete, "history does not cover [0, t)");
  const auto node = y.ancestor_at(t);
  double total = intrinsic_death_rate_at(cfg, t, node->trait, node->piece_start->time);
  for (const auto& l : cfg.lags) {
    if (l.lag > t) continue;
    double inner = 0.0;
    for (const auto& a : alive_before(history, t - l.lag)) inner += cfg.U(cfg.space, node->trait, a.lineage.tip_trait());
    total += l.weight * inner / cfg.nd();
  }
  return total;
}

/// X_t(K^c): mass of atoms whose path stopped at t is outside K. Paths in
/// K are tested against K's own horizon, which for a path stopped at
/// t <= K.horizon is membership of y^t in K.
inline double measure_outside(const TraitSpace& space, const PopulationState& state,
                              const CompactSetSpec& K, double t) {
  CompactSetTester tester;
  std::size_t outside = 0;
  const double T = std::max(t, K.horizon);
  for (const auto& a : state.atoms)
    if (!tester.contains(space, a.lineage.stopped(t), K, T)) ++outside;
  return static_cast<double>(outside) / static_cast<double>(state.n);
}

}  // namespace histflow
