#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <json.hpp>

#include "histflow/config.hpp"
#include "histflow/couplings.hpp"
#include "histflow/diagnostics.hpp"
#include "histflow/error.hpp"
#include "histflow/mutation.hpp"
#include "histflow/parallel.hpp"
#include "histflow/serialize.hpp"
#include "histflow/simulator.hpp"
#include "histflow/stats.hpp"
#include "histflow/yule.hpp"

namespace histflow {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputEnv = "HISTFLOW_OUT_DIR";
inline constexpr const char* kGridNote =
    "modulus envelope checked on a finite delta grid only, not for every delta";

/// 2 configuration, 3 capacity, 4 I/O, 1 anything else.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_config:
    case ErrorKind::invalid_point:
    case ErrorKind::config_violation:
    case ErrorKind::domain: return 2;
    case ErrorKind::capacity: return 3;
    case ErrorKind::io: return 4;
    default: return 1;
  }
}

inline json error_record(const Error& e) {
  json j{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}, {"exit_code", exit_code(e.kind())}};
  if (!e.field().empty()) j["field"] = e.field();
  return j;
}

inline json version_info() {
  return {{"histflow", kVersion},
          {"compiler", __VERSION__},
          {"cplusplus", __cplusplus},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"boost", BOOST_LIB_VERSION}};
}

/// %.17g, enough to round-trip a double.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
inline std::string fmt(std::uint64_t x) { return std::to_string(x); }
inline std::string fmt(const std::string& s) { return s; }

/// Run directory: every file written through it starts with the config
/// hash, and the manifest is written before the run and finalized after.
class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const std::filesystem::path& path() const noexcept { return dir_; }
  const std::string& hash() const noexcept { return hash_; }
  const std::vector<std::string>& files() const noexcept { return files_; }

  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + (dir_ / name).string());
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    return out;
  }

  /// Starts a CSV: hash comment line, then the column header.
  std::ofstream csv(const std::string& name, const std::vector<std::string>& columns) {
    auto out = open(name);
    out << "# config_hash=" << hash_ << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    return out;
  }

  void write_json(const std::string& name, json body) {
    body["config_hash"] = hash_;
    auto out = open(name);
    out << body.dump(2) << '\n';
    check(out, name);
  }

  void check(std::ofstream& out, const std::string& name) const {
    out.flush();
    if (!out) fail(ErrorKind::io, "write failed for " + (dir_ / name).string());
  }

 private:
  std::filesystem::path dir_;
  std::string hash_;
  std::vector<std::string> files_;
};

template <class... Ts>
void csv_row(std::ostream& out, const Ts&... cells) {
  bool first = true;
  ((out << (first ? "" : ",") << fmt(cells), first = false), ...);
  out << '\n';
}

struct RunResult {
  std::filesystem::path dir;
  std::string config_hash;
  std::vector<std::string> files;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<double> number_list(const json& p, const char* key, std::vector<double> fallback) {
  if (!p.contains(key)) return fallback;
  return numbers(p[key], join("experiment", key));
}

inline bool flag(const json& p, const char* key, bool fallback) {
  if (!p.contains(key)) return fallback;
  if (!p[key].is_boolean()) fail(ErrorKind::invalid_config, "expected true or false", join("experiment", key));
  return p[key].get<bool>();
}

/// Starting trait for spine and calibration runs: experiment.y0, else the
/// point of a point law or the centre of a ball law.
inline Trait reference_trait(const ExperimentConfig& c) {
  if (c.params.contains("y0")) return trait_from_json(c.params["y0"], c.model.space, "experiment.y0");
  if (c.initial.kind == InitialKind::point) return c.initial.point;
  if (c.initial.kind == InitialKind::uniform_region && c.initial.region.kind == RegionKind::ball)
    return c.initial.region.center;
  fail(ErrorKind::invalid_config, "cannot infer a starting trait from the initial law; set it explicitly",
       "experiment.y0");
}

struct CalibrationSetup {
  double q = 0.999;
  std::size_t samples = 2000;
  CalibrationOptions options;
};

inline CalibrationSetup calibration_setup(const json& p, const std::string& path) {
  CalibrationSetup s;
  s.q = number(p, "q", path, 0.999);
  s.samples = integer(p, "samples", path, 2000);
  if (p.contains("bonferroni")) {
    if (!p["bonferroni"].is_boolean()) fail(ErrorKind::invalid_config, "expected true or false", join(path, "bonferroni"));
    s.options.bonferroni = p["bonferroni"].get<bool>();
  }
  if (p.contains("grid")) s.options.grid = numbers(p["grid"], join(path, "grid"));
  return s;
}

/// Calibrates one set per population scale and merges them, so the same
/// K serves every n.
inline std::vector<Calibration> calibrate_per_n(const ExperimentConfig& c, const CalibrationSetup& s) {
  const Trait y0 = reference_trait(c);
  std::vector<Calibration> out;
  for (const auto& cfg : c.models())
    out.push_back(calibrate_envelope(cfg, y0, cfg.horizon, s.q, s.samples, stream_key(c.seed, cfg.n, "calibrate-K"),
                                     s.options));
  return out;
}

/// experiment.compact_set if given, else calibrated from experiment.calibrate.
inline CompactSetSpec compact_set_for(const ExperimentConfig& c, OutputDir& out) {
  const auto& p = c.params;
  if (p.contains("compact_set")) {
    auto K = compact_set_from_json(p["compact_set"], c.model.space, "experiment.compact_set");
    if (K.horizon != c.model.horizon)
      fail(ErrorKind::invalid_config, "compact set horizon must equal the model horizon",
           "experiment.compact_set.horizon");
    out.write_json("compact_set.json", {{"compact_set", compact_set_to_json(K)}, {"note", kGridNote}});
    return K;
  }
  const json cal = p.contains("calibrate") ? p["calibrate"] : json::object();
  const auto setup = calibration_setup(cal, "experiment.calibrate");
  const auto cals = calibrate_per_n(c, setup);
  std::vector<CompactSetSpec> sets;
  for (const auto& k : cals) sets.push_back(k.K);
  CompactSetSpec K = merge_compact_sets(sets);
  out.write_json("compact_set.json", {{"compact_set", compact_set_to_json(K)},
                                      {"q", setup.q},
                                      {"level", cals.front().level},
                                      {"samples", setup.samples},
                                      {"grid", setup.options.grid},
                                      {"note", kGridNote}});
  return K;
}

// Population size on a time grid, right-continuous.
struct GridCounts {
  const std::vector<double>* times = nullptr;
  std::vector<std::size_t> counts;
  std::size_t next = 0;
  std::size_t current = 0;

  void on_start(const PopulationState& s) {
    counts.assign(times->size(), 0);
    current = s.count();
  }
  void on_event(const PopulationState& s, const Event& e) {
    while (next < times->size() && (*times)[next] < e.time) counts[next++] = current;
    current = s.count();
  }
  void on_end(const PopulationState&) {
    while (next < times->size()) counts[next++] = current;
  }
};

inline std::vector<double> default_times(double T) {
  return {0.2 * T, 0.4 * T, 0.6 * T, 0.8 * T, T};
}

// ---- experiment runners ----

inline void run_simulate(const ExperimentConfig& c, OutputDir& out, RunResult& res, std::ostream& timing) {
  const auto event_logs = integer(c.params, "event_logs", "experiment", 0);
  auto terminal = out.csv("terminal.csv", {"n", "replicate", "stream_key", "terminal_mass", "event_count",
                                           "proposals", "max_mass"});
  auto summary = out.csv("summary.csv", {"n", "replicates", "mean_mass", "mean_se", "second_moment", "second_se"});
  for (const auto& cfg : c.models()) {
    const std::string tag = "simulate-" + std::to_string(cfg.n);
    std::vector<SimulationSummary> sums(c.replicates);
    std::vector<double> mass(c.replicates), wall(c.replicates);
    std::vector<EventLog> logs(std::min<std::size_t>(event_logs, c.replicates));
    for_each_replicate(
        c.replicates,
        [&](std::size_t k) {
          const auto t0 = Clock::now();
          Stream init = derive_stream(c.seed, k, tag + "-initial");
          Stream rng = derive_stream(c.seed, k, tag);
          PopulationState s = make_initial(cfg, c.initial, init);
          NullObserver obs;
          sums[k] = simulate(cfg, s, rng, obs, k < logs.size() ? &logs[k] : nullptr);
          mass[k] = s.mass();
          wall[k] = seconds_since(t0);
        },
        c.workers);
    SampleMoments m1, m2;
    for (std::size_t k = 0; k < c.replicates; ++k) {
      csv_row(terminal, std::uint64_t{cfg.n}, std::uint64_t{k}, stream_key(c.seed, k, tag), mass[k],
              sums[k].events, sums[k].proposals, sums[k].max_mass);
      csv_row(timing, tag, std::uint64_t{k}, wall[k]);
      m1.add(mass[k]);
      m2.add(mass[k] * mass[k]);
    }
    csv_row(summary, std::uint64_t{cfg.n}, std::uint64_t{c.replicates}, m1.mean(), m1.standard_error(), m2.mean(),
            m2.standard_error());
    for (std::size_t k = 0; k < logs.size(); ++k) {
      const std::string name = "events-n" + std::to_string(cfg.n) + "-r" + std::to_string(k) + ".jsonl";
      auto f = out.open(name);
      write_event_log(logs[k], f, out.hash());
      out.check(f, name);
    }
  }
  out.check(terminal, "terminal.csv");
  out.check(summary, "summary.csv");
  (void)res;
}

inline void run_containment(const ExperimentConfig& c, OutputDir& out, RunResult& res, std::ostream& timing) {
  const auto& p = c.params;
  const double eps = number(p, "epsilon", "experiment", 0.1);
  const CompactSetSpec K = compact_set_for(c, out);
  auto csv = out.csv("containment.csv", {"n", "replicates", "crossings", "probability", "ci_lo", "ci_hi",
                                         "escape_mass", "escape_mass_se"});
  for (const auto& cfg : c.models()) {
    const auto t0 = Clock::now();
    const auto rep = containment_probability({cfg}, c.initial, K, eps, c.replicates, c.seed, c.workers);
    const auto& r = rep.rows.front();
    csv_row(csv, std::uint64_t{r.n}, std::uint64_t{r.replicates}, std::uint64_t{r.crossings}, r.probability, r.ci.lo,
            r.ci.hi, r.escape_mass, r.escape_mass_se);
    csv_row(timing, "containment-" + std::to_string(cfg.n), std::uint64_t{0}, seconds_since(t0));
  }
  out.check(csv, "containment.csv");
  if (p.contains("A")) {
    const double A = number(p, "A", "experiment");
    auto esc = out.csv("escape.csv", {"n", "direct", "direct_se", "spine_escape", "spine_escape_se",
                                      "spine_escape_y", "tail_bound", "surrogate", "surrogate_se"});
    for (const auto& cfg : c.models()) {
      const auto t0 = Clock::now();
      const auto e = estimate_escape_mass(cfg, c.initial, K, A, c.replicates, c.seed);
      if (!e.tail.warning.empty()) res.warnings.push_back(e.tail.warning);
      csv_row(esc, std::uint64_t{cfg.n}, e.direct, e.direct_se, e.spine_escape, e.spine_escape_se, e.spine_escape_y,
              e.tail.bound, e.surrogate, e.surrogate_se);
      csv_row(timing, "escape-" + std::to_string(cfg.n), std::uint64_t{0}, seconds_since(t0));
    }
    out.check(esc, "escape.csv");
  }
}

inline void run_moments(const ExperimentConfig& c, OutputDir& out, RunResult&, std::ostream& timing) {
  const auto t0 = Clock::now();
  const auto rep = sup_mass_moments(c.models(), c.initial, c.replicates, c.seed, c.workers);
  csv_row(timing, std::string("moments"), std::uint64_t{0}, seconds_since(t0));
  auto csv = out.csv("moments.csv", {"n", "first", "first_se", "second", "second_se"});
  for (const auto& r : rep.rows) csv_row(csv, std::uint64_t{r.n}, r.first, r.first_se, r.second, r.second_se);
  out.check(csv, "moments.csv");
  out.write_json("moments.json", {{"trend_up", rep.trend_up}});
}

inline void run_modulus(const ExperimentConfig& c, OutputDir& out, RunResult&, std::ostream& timing) {
  const auto& p = c.params;
  const double tau = number(p, "tau", "experiment");
  const double eps = number(p, "epsilon", "experiment", 0.1);
  const auto t0s = number_list(p, "t0", {0.2, 0.05, 0.01});
  auto csv = out.csv("exceedance.csv", {"n", "t0", "replicates", "crossings", "probability", "ci_lo", "ci_hi"});
  json report{{"tau", tau}, {"epsilon", eps}, {"monotone", json::object()}};
  for (const auto& cfg : c.models()) {
    const auto t0 = Clock::now();
    const auto rep = modulus_exceedance(cfg, c.initial, tau, t0s, eps, c.replicates, c.seed, c.workers);
    for (const auto& r : rep.rows)
      csv_row(csv, std::uint64_t{cfg.n}, r.t0, std::uint64_t{r.replicates}, std::uint64_t{r.crossings}, r.probability,
              r.ci.lo, r.ci.hi);
    report["monotone"][std::to_string(cfg.n)] = rep.monotone;
    csv_row(timing, "modulus-" + std::to_string(cfg.n), std::uint64_t{0}, seconds_since(t0));
  }
  out.check(csv, "exceedance.csv");
  out.write_json("exceedance.json", report);
}

inline void run_couplings(const ExperimentConfig& c, OutputDir& out, RunResult& res, std::ostream& timing) {
  const auto& p = c.params;
  const double D0 = number(p, "D0", "experiment", 0.0);
  const double eps = number(p, "epsilon", "experiment", 0.1);
  InitialLaw start = c.initial;
  start.mass = number(p, "start_mass", "experiment", eps);
  auto audit = out.csv("audit.csv", {"n", "replicate", "base_events", "companion_events", "audits", "violations",
                                     "base_final", "companion_final"});
  auto surv = out.csv("survival.csv", {"n", "D0", "start_mass", "successes", "trials", "estimate", "ci_lo", "ci_hi"});
  for (const auto& cfg : c.models()) {
    const std::string tag = "coupling-" + std::to_string(cfg.n);
    const auto t0 = Clock::now();
    std::vector<std::array<std::uint64_t, 6>> rows(c.replicates);
    for_each_replicate(
        c.replicates,
        [&](std::size_t k) {
          Stream init = derive_stream(c.seed, k, tag + "-initial");
          Stream rng = derive_stream(c.seed, k, tag);
          const PopulationState s = make_initial(cfg, c.initial, init);
          const auto run = run_dominating_coupling(cfg, s, rng);
          rows[k] = {run.base.events.size(), run.companion.events.size(), run.audits, run.violations,
                     run.base_final.count(), run.companion_final.count()};
        },
        c.workers);
    for (std::size_t k = 0; k < c.replicates; ++k)
      csv_row(audit, std::uint64_t{cfg.n}, std::uint64_t{k}, rows[k][0], rows[k][1], rows[k][2], rows[k][3],
              rows[k][4], rows[k][5]);
    const auto s = estimate_survival(cfg, start, D0, eps, cfg.horizon, c.replicates, c.seed);
    if (!s.warning.empty() && res.warnings.empty()) res.warnings.push_back(s.warning);
    csv_row(surv, std::uint64_t{cfg.n}, D0, start.mass, std::uint64_t{s.successes}, std::uint64_t{s.trials},
            s.estimate, s.ci.lo, s.ci.hi);
    csv_row(timing, tag, std::uint64_t{0}, seconds_since(t0));
  }
  out.check(audit, "audit.csv");
  out.check(surv, "survival.csv");
}

inline void run_yule(const ExperimentConfig& c, OutputDir& out, RunResult& res, std::ostream& timing) {
  const auto& p = c.params;
  const auto times = number_list(p, "times", default_times(c.model.horizon));
  for (double t : times)
    if (!(t >= 0.0 && t <= c.model.horizon))
      fail(ErrorKind::invalid_config, "times must lie in [0, horizon]", "experiment.times");
  const auto export_trees = integer(p, "export_trees", "experiment", 1);
  auto sizes = out.csv("sizes.csv", {"n", "time", "replicates", "yule_mean", "yule_mean_se", "yule_var",
                                     "direct_mean", "direct_mean_se", "direct_var"});
  for (const auto& base : c.models()) {
    const ModelConfig cfg = dominate(base);
    const std::string tag = "yule-" + std::to_string(cfg.n);
    const auto t0 = Clock::now();
    std::vector<std::vector<std::size_t>> yule(c.replicates), direct(c.replicates);
    std::vector<YuleTree> trees(std::min<std::size_t>(export_trees, c.replicates));
    for_each_replicate(
        c.replicates,
        [&](std::size_t k) {
          Stream init = derive_stream(c.seed, k, tag + "-initial");
          std::vector<Trait> traits;
          for (std::size_t i = 0, m = c.initial.count(cfg.n); i < m; ++i)
            traits.push_back(c.initial.sample(cfg.space, init));
          Stream rng = derive_stream(c.seed, k, tag);
          YuleTree tree = grow_pruned_yule(cfg, traits, cfg.horizon, rng);
          for (double t : times) yule[k].push_back(tree.alive_count(t));
          if (k < trees.size()) trees[k] = std::move(tree);

          Stream drng = derive_stream(c.seed, k, tag + "-direct");
          PopulationState s = make_population(cfg.n, traits);
          GridCounts obs;
          obs.times = &times;
          simulate(cfg, s, drng, obs);
          direct[k] = obs.counts;
        },
        c.workers);
    for (std::size_t j = 0; j < times.size(); ++j) {
      SampleMoments a, b;
      for (std::size_t k = 0; k < c.replicates; ++k) {
        a.add(static_cast<double>(yule[k][j]));
        b.add(static_cast<double>(direct[k][j]));
      }
      csv_row(sizes, std::uint64_t{cfg.n}, times[j], std::uint64_t{c.replicates}, a.mean(), a.standard_error(),
              a.variance(), b.mean(), b.standard_error(), b.variance());
    }
    for (std::size_t k = 0; k < trees.size(); ++k) {
      const std::string name = "tree-n" + std::to_string(cfg.n) + "-r" + std::to_string(k) + ".jsonl";
      auto f = out.open(name);
      f << json{{"config_hash", out.hash()}, {"n", cfg.n}, {"horizon", cfg.horizon}, {"replicate", k}}.dump() << '\n';
      write_tree_jsonl(trees[k], f);
      out.check(f, name);
    }
    csv_row(timing, tag, std::uint64_t{0}, seconds_since(t0));
  }
  out.check(sizes, "sizes.csv");
  if (p.contains("A")) {
    const double A = number(p, "A", "experiment");
    const CompactSetSpec K = compact_set_for(c, out);
    auto esc = out.csv("escape.csv", {"n", "direct", "direct_se", "spine_escape", "spine_escape_se",
                                      "spine_escape_y", "tail_bound", "surrogate", "surrogate_se"});
    for (const auto& cfg : c.models()) {
      const auto e = estimate_escape_mass(cfg, c.initial, K, A, c.replicates, c.seed);
      if (!e.tail.warning.empty()) res.warnings.push_back(e.tail.warning);
      csv_row(esc, std::uint64_t{cfg.n}, e.direct, e.direct_se, e.spine_escape, e.spine_escape_se, e.spine_escape_y,
              e.tail.bound, e.surrogate, e.surrogate_se);
    }
    out.check(esc, "escape.csv");
  }
}

inline TestFunction test_function_from_json(const json& p) {
  TestFunction f;
  if (!p.contains("function")) return f;
  const auto& j = p["function"];
  const std::string path = "experiment.function";
  const std::string kind = j.is_string() ? j.get<std::string>() : text(j, "kind", path);
  if (kind == "sin") f.kind = FunctionKind::sin;
  else if (kind == "square") f.kind = FunctionKind::square;
  else if (kind == "linear") f.kind = FunctionKind::linear;
  else if (kind == "constant") {
    f.kind = FunctionKind::constant;
    f.value = number(j, "value", path, 1.0);
  } else if (kind == "table") {
    f.kind = FunctionKind::table;
    if (!j.is_object() || !j.contains("values")) fail(ErrorKind::invalid_config, "table needs values", path);
    f.table = numbers(j["values"], join(path, "values"));
  } else {
    fail(ErrorKind::invalid_config, "unknown test function '" + kind + "'", path);
  }
  return f;
}

inline std::vector<Trait> generator_grid(const ExperimentConfig& c) {
  const auto& space = c.model.space;
  std::vector<Trait> grid;
  if (c.params.contains("grid")) {
    if (!c.params["grid"].is_array()) fail(ErrorKind::invalid_config, "expected an array of traits", "experiment.grid");
    for (const auto& x : c.params["grid"]) grid.push_back(trait_from_json(x, space, "experiment.grid"));
    return grid;
  }
  switch (space.kind()) {
    case SpaceKind::finite:
      for (std::size_t i = 0; i < space.size(); ++i) grid.push_back(Trait::label(i));
      break;
    case SpaceKind::interval:
      for (int i = 0; i <= 20; ++i) grid.emplace_back(space.lo() + (space.hi() - space.lo()) * i / 20.0);
      break;
    case SpaceKind::euclidean:
      if (space.dim() != 1) fail(ErrorKind::invalid_config, "give an explicit grid in dimension > 1", "experiment.grid");
      for (int i = 0; i <= 20; ++i) grid.emplace_back(-3.0 + 0.3 * i);
      break;
  }
  return grid;
}

inline void run_kernels(const ExperimentConfig& c, OutputDir& out, RunResult&, std::ostream& timing) {
  const auto& p = c.params;
  const TestFunction f = test_function_from_json(p);
  if (f.kind == FunctionKind::table && f.table.size() != c.model.space.size())
    fail(ErrorKind::invalid_config, "table needs one value per label", "experiment.function.values");
  const std::size_t fallback = c.model.kernel.kind == KernelKind::truncated_gaussian ? 10000 : 0;
  const auto samples = integer(p, "samples", "experiment", fallback);
  const auto grid = generator_grid(c);
  const auto t0 = Clock::now();
  Stream rng = derive_stream(c.seed, 0, "kernels");
  const auto rep = generator_convergence_report(c.model.kernel, c.model.space, f,
                                                default_generator_target(c.model.kernel, f), grid, c.n_list, samples,
                                                rng);
  csv_row(timing, std::string("kernels"), std::uint64_t{0}, seconds_since(t0));
  auto csv = out.csv("generator.csv", {"n", "sup_discrepancy", "max_se"});
  for (const auto& r : rep.rows) csv_row(csv, std::uint64_t{r.n}, r.sup_discrepancy, r.max_se);
  out.check(csv, "generator.csv");
  out.write_json("generator.json", {{"converging", rep.converging}, {"samples", samples}, {"grid_points", grid.size()}});
}

inline void run_calibrate(const ExperimentConfig& c, OutputDir& out, RunResult&, std::ostream& timing) {
  const auto setup = calibration_setup(c.params, "experiment");
  const auto check = integer(c.params, "check_samples", "experiment", setup.samples);
  const Trait y0 = reference_trait(c);
  const auto t0 = Clock::now();
  const auto cals = calibrate_per_n(c, setup);
  auto env = out.csv("envelope.csv", {"n", "delta", "bound", "radius", "level"});
  auto fresh = out.csv("calibration.csv", {"n", "level", "radius", "fresh_escape", "fresh_escape_se"});
  std::vector<CompactSetSpec> sets;
  const auto models = c.models();
  for (std::size_t i = 0; i < cals.size(); ++i) {
    const auto& K = cals[i].K;
    for (const auto& e : K.envelope)
      csv_row(env, std::uint64_t{models[i].n}, e.delta, e.bound, K.region.radius, cals[i].level);
    const auto est = spine_escape_probability(models[i], y0, K, check, stream_key(c.seed, models[i].n, "calibrate-check"));
    csv_row(fresh, std::uint64_t{models[i].n}, cals[i].level, K.region.radius, est.value, est.standard_error);
    sets.push_back(K);
  }
  csv_row(timing, std::string("calibrate"), std::uint64_t{0}, seconds_since(t0));
  out.check(env, "envelope.csv");
  out.check(fresh, "calibration.csv");
  out.write_json("compact_set.json", {{"compact_set", compact_set_to_json(merge_compact_sets(sets))},
                                      {"q", setup.q},
                                      {"level", cals.front().level},
                                      {"samples", setup.samples},
                                      {"grid", setup.options.grid},
                                      {"note", kGridNote}});
}

}  // namespace detail

/// Output directory: explicit argument, else the environment override,
/// else the config's output entry, else histflow-out/<kind>.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& c, const std::string& cli = {}) {
  if (!cli.empty()) return cli;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  if (!c.output.empty()) return c.output;
  return std::filesystem::path("histflow-out") / std::string(to_string(c.kind));
}

/// Runs the configured experiment into `dir`. The manifest is written
/// with status "running" first, then finalized as "complete" or "failed".
inline RunResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const auto t0 = detail::Clock::now();
  RunResult res;
  res.dir = dir;
  res.config_hash = config_hash(c);
  res.warnings = c.warnings;
  OutputDir out(dir, res.config_hash);

  json manifest{{"status", "running"},
                {"kind", std::string(to_string(c.kind))},
                {"config_hash", res.config_hash},
                {"seed", c.seed},
                {"replicates", c.replicates},
                {"n_list", c.n_list},
                {"versions", version_info()},
                {"started_at", detail::utc_now()},
                {"config", c.source}};
  auto write_manifest = [&] {
    std::ofstream m(dir / "manifest.json", std::ios::trunc);
    if (!m) fail(ErrorKind::io, "cannot write " + (dir / "manifest.json").string());
    m << manifest.dump(2) << '\n';
    if (!m) fail(ErrorKind::io, "write failed for manifest");
  };
  write_manifest();

  try {
    auto timing = out.csv("timing.csv", {"stage", "replicate", "wall_seconds"});
    switch (c.kind) {
      case ExperimentKind::simulate: detail::run_simulate(c, out, res, timing); break;
      case ExperimentKind::containment: detail::run_containment(c, out, res, timing); break;
      case ExperimentKind::moments: detail::run_moments(c, out, res, timing); break;
      case ExperimentKind::modulus: detail::run_modulus(c, out, res, timing); break;
      case ExperimentKind::couplings: detail::run_couplings(c, out, res, timing); break;
      case ExperimentKind::yule: detail::run_yule(c, out, res, timing); break;
      case ExperimentKind::kernels: detail::run_kernels(c, out, res, timing); break;
      case ExperimentKind::calibrate: detail::run_calibrate(c, out, res, timing); break;
    }
    out.check(timing, "timing.csv");
  } catch (const Error& e) {
    manifest["status"] = "failed";
    manifest["error"] = error_record(e);
    manifest["outputs"] = out.files();
    manifest["wall_time_seconds"] = detail::seconds_since(t0);
    write_manifest();
    throw;
  }
  res.files = out.files();
  res.wall_seconds = detail::seconds_since(t0);
  manifest["status"] = "complete";
  manifest["outputs"] = res.files;
  manifest["warnings"] = res.warnings;
  manifest["wall_time_seconds"] = res.wall_seconds;
  write_manifest();
  return res;
}

/// Checks that a finished run directory belongs to `c`: the manifest is
/// complete and it and every listed output carry the config's hash.
/// Returns the list of checked files.
inline std::vector<std::string> verify_outputs(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const std::string want = config_hash(c);
  const json manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("status", "") != "complete")
    fail(ErrorKind::invalid_config, "run in " + dir.string() + " did not complete", "manifest.status");
  auto mismatch = [&](const std::string& what, const std::string& got) {
    fail(ErrorKind::invalid_config,
         what + " carries config hash " + got + " but the config hashes to " + want, "config_hash");
  };
  const std::string got = manifest.value("config_hash", "");
  if (got != want) mismatch("manifest.json", got);
  auto hash_field = [](const json& j) { return j.is_object() ? j.value("config_hash", "") : std::string(); };
  std::vector<std::string> checked;
  for (const auto& name : manifest.value("outputs", std::vector<std::string>{})) {
    const auto path = dir / name;
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "missing output " + path.string());
    std::string hash;
    if (name.ends_with(".csv")) {
      std::string line;
      std::getline(in, line);
      const std::string prefix = "# config_hash=";
      hash = line.starts_with(prefix) ? line.substr(prefix.size()) : "";
    } else if (name.ends_with(".jsonl")) {
      std::string line;
      std::getline(in, line);
      hash = hash_field(json::parse(line, nullptr, false));
    } else {
      hash = hash_field(json::parse(in, nullptr, false));
    }
    if (hash != want) mismatch(name, hash.empty() ? std::string("(none)") : hash);
    checked.push_back(name);
  }
  return checked;
}

}  // namespace histflow
