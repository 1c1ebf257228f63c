#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "histflow/compact_set.hpp"
#include "histflow/couplings.hpp"
#include "histflow/error.hpp"
#include "histflow/model.hpp"
#include "histflow/mutation.hpp"
#include "histflow/random.hpp"
#include "histflow/serialize.hpp"
#include "histflow/trait_space.hpp"

namespace histflow {

enum class ExperimentKind { simulate, containment, moments, modulus, couplings, yule, kernels, calibrate };

inline constexpr std::string_view kExperimentNames[] = {"simulate", "containment", "moments", "modulus",
                                                        "couplings", "yule",        "kernels", "calibrate"};

inline std::string_view to_string(ExperimentKind k) { return kExperimentNames[static_cast<int>(k)]; }

inline std::optional<ExperimentKind> parse_experiment_kind(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kExperimentNames); ++i)
    if (kExperimentNames[i] == s) return static_cast<ExperimentKind>(i);
  return std::nullopt;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::simulate;
  ModelConfig model;
  InitialLaw initial;
  std::size_t replicates = 100;
  /// Population scales to run; defaults to {model.n}.
  std::vector<std::size_t> n_list;
  std::uint64_t seed = 1;
  std::string output;
  unsigned workers = 0;
  /// Kind-specific parameters, read by the experiment runner.
  json params = json::object();
  /// Parsed document with command line overrides applied.
  json source;
  std::vector<std::string> warnings;

  /// Model copies, one per entry of n_list.
  std::vector<ModelConfig> models() const {
    std::vector<ModelConfig> out;
    for (std::size_t n : n_list) {
      ModelConfig m = model;
      m.n = n;
      out.push_back(std::move(m));
    }
    return out;
  }
};

namespace detail {

inline std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
  if (!obj.is_object()) fail(ErrorKind::invalid_config, "expected an object", path);
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      fail(ErrorKind::invalid_config, "unknown key '" + key + "'", join(path, key));
}

inline double number(const json& obj, std::string_view key, const std::string& path,
                     std::optional<double> fallback = std::nullopt) {
  const std::string field = join(path, key);
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    fail(ErrorKind::invalid_config, "missing required number", field);
  }
  const auto& v = obj[std::string(key)];
  if (!v.is_number()) fail(ErrorKind::invalid_config, "expected a number", field);
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(ErrorKind::invalid_config, "expected a finite number", field);
  return x;
}

inline std::uint64_t integer(const json& obj, std::string_view key, const std::string& path,
                             std::optional<std::uint64_t> fallback = std::nullopt) {
  const std::string field = join(path, key);
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    fail(ErrorKind::invalid_config, "missing required integer", field);
  }
  const auto& v = obj[std::string(key)];
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    fail(ErrorKind::invalid_config, "expected a nonnegative integer", field);
  return v.get<std::uint64_t>();
}

inline std::string text(const json& obj, std::string_view key, const std::string& path,
                        std::optional<std::string> fallback = std::nullopt) {
  const std::string field = join(path, key);
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    fail(ErrorKind::invalid_config, "missing required string", field);
  }
  const auto& v = obj[std::string(key)];
  if (!v.is_string()) fail(ErrorKind::invalid_config, "expected a string", field);
  return v.get<std::string>();
}

inline std::vector<double> numbers(const json& v, const std::string& field) {
  if (!v.is_array()) fail(ErrorKind::invalid_config, "expected an array of numbers", field);
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) fail(ErrorKind::invalid_config, "expected an array of numbers", field);
    out.push_back(x.get<double>());
  }
  return out;
}

// Matrix given as an array of rows; returned row-major.
inline std::vector<double> matrix(const json& v, std::size_t m, const std::string& field) {
  if (!v.is_array() || v.size() != m) fail(ErrorKind::invalid_config, "expected " + std::to_string(m) + " rows", field);
  std::vector<double> out;
  for (const auto& row : v) {
    auto r = numbers(row, field);
    if (r.size() != m) fail(ErrorKind::invalid_config, "expected " + std::to_string(m) + " columns", field);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

// Re-raise construction errors from the model types under the given field.
template <class F>
auto with_field(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    fail(ErrorKind::invalid_config, e.what(), field);
  }
}

}  // namespace detail

inline TraitSpace space_from_json(const json& j, const std::string& path) {
  const std::string kind = detail::text(j, "kind", path);
  if (kind == "euclidean") {
    detail::check_keys(j, {"kind", "dim"}, path);
    const auto dim = detail::integer(j, "dim", path, 1);
    return detail::with_field(detail::join(path, "dim"), [&] { return TraitSpace::euclidean(dim); });
  }
  if (kind == "interval") {
    detail::check_keys(j, {"kind", "lo", "hi"}, path);
    const double lo = detail::number(j, "lo", path), hi = detail::number(j, "hi", path);
    return detail::with_field(detail::join(path, "lo"), [&] { return TraitSpace::interval(lo, hi); });
  }
  if (kind == "finite") {
    detail::check_keys(j, {"kind", "labels", "distances"}, path);
    const std::string lf = detail::join(path, "labels");
    if (!j.contains("labels") || !j["labels"].is_array()) fail(ErrorKind::invalid_config, "expected label names", lf);
    std::vector<std::string> labels;
    for (const auto& l : j["labels"]) {
      if (!l.is_string()) fail(ErrorKind::invalid_config, "labels must be strings", lf);
      labels.push_back(l.get<std::string>());
    }
    const std::string df = detail::join(path, "distances");
    if (!j.contains("distances")) fail(ErrorKind::invalid_config, "missing distance table", df);
    auto table = detail::matrix(j["distances"], labels.size(), df);
    return detail::with_field(df, [&] { return TraitSpace::finite(labels, table); });
  }
  fail(ErrorKind::invalid_config, "unknown space kind '" + kind + "'", detail::join(path, "kind"));
}

inline CompactRegion region_from_json(const json& j, const TraitSpace& space, const std::string& path) {
  const std::string kind = detail::text(j, "kind", path);
  CompactRegion r;
  if (kind == "ball") {
    detail::check_keys(j, {"kind", "center", "radius"}, path);
    const std::string cf = detail::join(path, "center");
    if (!j.contains("center")) fail(ErrorKind::invalid_config, "missing ball centre", cf);
    Trait c = trait_from_json(j["center"], space, cf);
    const double radius = detail::number(j, "radius", path);
    r = detail::with_field(detail::join(path, "radius"), [&] { return CompactRegion::ball(c, radius); });
  } else if (kind == "box") {
    detail::check_keys(j, {"kind", "lo", "hi"}, path);
    const std::string lf = detail::join(path, "lo");
    if (!j.contains("lo") || !j.contains("hi")) fail(ErrorKind::invalid_config, "box needs lo and hi", lf);
    auto lo = detail::numbers(j["lo"], lf);
    auto hi = detail::numbers(j["hi"], detail::join(path, "hi"));
    r = detail::with_field(lf, [&] { return CompactRegion::box(lo, hi); });
  } else if (kind == "all_points") {
    detail::check_keys(j, {"kind"}, path);
    r = CompactRegion::all_points();
  } else {
    fail(ErrorKind::invalid_config, "unknown region kind '" + kind + "'", detail::join(path, "kind"));
  }
  detail::with_field(path, [&] { r.check_compatible(space); });
  return r;
}

inline CompactSetSpec compact_set_from_json(const json& j, const TraitSpace& space, const std::string& path) {
  detail::check_keys(j, {"horizon", "region", "envelope"}, path);
  CompactSetSpec K;
  K.horizon = detail::number(j, "horizon", path);
  if (!j.contains("region")) fail(ErrorKind::invalid_config, "missing region", detail::join(path, "region"));
  K.region = region_from_json(j["region"], space, detail::join(path, "region"));
  const std::string ef = detail::join(path, "envelope");
  if (j.contains("envelope")) {
    if (!j["envelope"].is_array()) fail(ErrorKind::invalid_config, "expected an array", ef);
    for (const auto& e : j["envelope"]) {
      detail::check_keys(e, {"delta", "bound"}, ef);
      EnvelopePoint p;
      p.delta = detail::number(e, "delta", ef);
      // null bound: unconstrained
      p.bound = e.contains("bound") && e["bound"].is_null() ? std::numeric_limits<double>::infinity()
                                                            : detail::number(e, "bound", ef);
      K.envelope.push_back(p);
    }
  }
  detail::with_field(path, [&] { K.validate(space); });
  return K;
}

inline MutationKernel kernel_from_json(const json& j, const TraitSpace& space, const std::string& path) {
  const std::string kind = detail::text(j, "kind", path);
  MutationKernel k;
  if (kind == "gaussian" || kind == "truncated_gaussian") {
    detail::check_keys(j, {"kind", "sigma"}, path);
    const double sigma = detail::number(j, "sigma", path);
    k = detail::with_field(detail::join(path, "sigma"), [&] {
      return kind == "gaussian" ? MutationKernel::gaussian(sigma) : MutationKernel::truncated_gaussian(sigma);
    });
  } else if (kind == "finite_jump") {
    detail::check_keys(j, {"kind", "matrix"}, path);
    const std::string mf = detail::join(path, "matrix");
    if (!j.contains("matrix")) fail(ErrorKind::invalid_config, "missing jump matrix", mf);
    auto q = detail::matrix(j["matrix"], space.size(), mf);
    k = detail::with_field(mf, [&] { return MutationKernel::finite_jump(space.size(), q); });
  } else {
    fail(ErrorKind::invalid_config, "unknown kernel kind '" + kind + "'", detail::join(path, "kind"));
  }
  detail::with_field(detail::join(path, "kind"), [&] { k.check_compatible(space); });
  return k;
}

/// A bare number is a constant rate.
inline RateForm rate_from_json(const json& j, const TraitSpace& space, const std::string& path) {
  if (j.is_number()) return RateForm::constant(j.get<double>());
  const std::string kind = detail::text(j, "kind", path);
  const double inf = std::numeric_limits<double>::infinity();
  if (kind == "constant") {
    detail::check_keys(j, {"kind", "value"}, path);
    return RateForm::constant(detail::number(j, "value", path));
  }
  if (kind == "trait") {
    detail::check_keys(j, {"kind", "base", "slope", "anchor", "lo", "hi"}, path);
    const std::string af = detail::join(path, "anchor");
    if (!j.contains("anchor")) fail(ErrorKind::invalid_config, "trait rate needs an anchor", af);
    return RateForm::trait(detail::number(j, "base", path), detail::number(j, "slope", path, 0.0),
                           trait_from_json(j["anchor"], space, af), detail::number(j, "lo", path, -inf),
                           detail::number(j, "hi", path, inf));
  }
  if (kind == "age") {
    detail::check_keys(j, {"kind", "base", "slope", "lo", "hi"}, path);
    return RateForm::age(detail::number(j, "base", path), detail::number(j, "slope", path, 0.0),
                         detail::number(j, "lo", path, -inf), detail::number(j, "hi", path, inf));
  }
  fail(ErrorKind::invalid_config, "unknown rate kind '" + kind + "'", detail::join(path, "kind"));
}

inline InteractionForm interaction_from_json(const json& j, const std::string& path) {
  if (j.is_number()) return InteractionForm::constant(j.get<double>());
  const std::string kind = detail::text(j, "kind", path);
  if (kind == "constant") {
    detail::check_keys(j, {"kind", "value"}, path);
    return InteractionForm::constant(detail::number(j, "value", path));
  }
  if (kind == "gaussian_distance") {
    detail::check_keys(j, {"kind", "amplitude", "width"}, path);
    return InteractionForm::gaussian_distance(detail::number(j, "amplitude", path),
                                              detail::number(j, "width", path, 1.0));
  }
  fail(ErrorKind::invalid_config, "unknown interaction kind '" + kind + "'", detail::join(path, "kind"));
}

/// Parses and validates the model section. Missing bounds are taken from
/// the attainable ranges of the rate forms.
inline ModelConfig model_from_json(const json& j, const std::string& path = "model") {
  detail::check_keys(j, {"n", "horizon", "p", "event_cap", "space", "kernel", "r", "b", "D", "U", "lags", "bounds"},
                     path);
  ModelConfig m;
  m.n = detail::integer(j, "n", path, 100);
  m.horizon = detail::number(j, "horizon", path, 1.0);
  m.p = detail::number(j, "p", path, 0.0);
  m.event_cap = detail::integer(j, "event_cap", path, m.event_cap);
  if (!j.contains("space")) fail(ErrorKind::invalid_config, "missing trait space", detail::join(path, "space"));
  m.space = space_from_json(j["space"], detail::join(path, "space"));
  if (j.contains("kernel")) {
    m.kernel = kernel_from_json(j["kernel"], m.space, detail::join(path, "kernel"));
  } else if (m.space.kind() != SpaceKind::euclidean) {
    fail(ErrorKind::invalid_config, "non-euclidean spaces need an explicit kernel", detail::join(path, "kernel"));
  }
  if (j.contains("r")) m.r = rate_from_json(j["r"], m.space, detail::join(path, "r"));
  if (j.contains("b")) m.b = rate_from_json(j["b"], m.space, detail::join(path, "b"));
  if (j.contains("D")) m.D = rate_from_json(j["D"], m.space, detail::join(path, "D"));
  if (j.contains("U")) m.U = interaction_from_json(j["U"], detail::join(path, "U"));
  if (j.contains("lags")) {
    const std::string lf = detail::join(path, "lags");
    if (!j["lags"].is_array() || j["lags"].empty()) fail(ErrorKind::invalid_config, "expected a nonempty array", lf);
    m.lags.clear();
    for (const auto& l : j["lags"]) {
      detail::check_keys(l, {"lag", "weight"}, lf);
      m.lags.push_back({detail::number(l, "lag", lf, 0.0), detail::number(l, "weight", lf, 1.0)});
    }
  }
  // A bound left out is read off the form; problems with such a bound are
  // reported against the form.
  const json bounds = j.contains("bounds") ? j["bounds"] : json::object();
  const std::string bf = detail::join(path, "bounds");
  detail::check_keys(bounds, {"r_lo", "r_hi", "b_hi", "d_hi", "u_hi"}, bf);
  auto bound = [&](const char* key, double derived, const char* form) {
    if (bounds.contains(key)) return detail::number(bounds, key, bf);
    if (!std::isfinite(derived))
      fail(ErrorKind::invalid_config, "rate is unbounded; clamp it with lo/hi or set " + detail::join(bf, key),
           detail::join(path, form));
    return derived;
  };
  const auto [r_lo, r_hi] = m.r.range();
  m.bounds.r_lo = bound("r_lo", r_lo, "r");
  m.bounds.r_hi = bound("r_hi", r_hi, "r");
  m.bounds.b_hi = bound("b_hi", std::max(0.0, m.b.range().second), "b");
  m.bounds.d_hi = bound("d_hi", std::max(0.0, m.D.range().second), "D");
  m.bounds.u_hi = bound("u_hi", std::max(0.0, m.U.amplitude), "U");
  if (!bounds.contains("r_lo") && !(m.bounds.r_lo > 0.0))
    fail(ErrorKind::invalid_config, "r must stay above a positive constant", detail::join(path, "r"));
  validate(m);
  return m;
}

inline InitialLaw initial_from_json(const json& j, const TraitSpace& space, const std::string& path = "initial") {
  InitialLaw law;
  const std::string kind = detail::text(j, "kind", path, "point");
  law.mass = detail::number(j, "mass", path, 1.0);
  if (kind == "point") {
    detail::check_keys(j, {"kind", "mass", "point"}, path);
    const std::string pf = detail::join(path, "point");
    if (!j.contains("point")) fail(ErrorKind::invalid_config, "missing initial point", pf);
    law.kind = InitialKind::point;
    law.point = trait_from_json(j["point"], space, pf);
  } else if (kind == "uniform_region") {
    detail::check_keys(j, {"kind", "mass", "region"}, path);
    const std::string rf = detail::join(path, "region");
    if (!j.contains("region")) fail(ErrorKind::invalid_config, "missing initial region", rf);
    law.kind = InitialKind::uniform_region;
    law.region = region_from_json(j["region"], space, rf);
  } else if (kind == "finite_list") {
    detail::check_keys(j, {"kind", "mass", "support", "weights"}, path);
    const std::string sf = detail::join(path, "support");
    if (!j.contains("support") || !j["support"].is_array())
      fail(ErrorKind::invalid_config, "expected an array of traits", sf);
    law.kind = InitialKind::finite_list;
    for (const auto& x : j["support"]) law.support.push_back(trait_from_json(x, space, sf));
    law.weights = j.contains("weights") ? detail::numbers(j["weights"], detail::join(path, "weights"))
                                        : std::vector<double>(law.support.size(), 1.0);
  } else {
    fail(ErrorKind::invalid_config, "unknown initial law '" + kind + "'", detail::join(path, "kind"));
  }
  law.validate(space);
  return law;
}

/// Overrides applied on top of the file, as given on the command line.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::optional<std::string> output;
};

/// Builds a validated experiment config from a parsed document. A kind
/// given by the caller must match the document's kind if it has one.
inline ExperimentConfig experiment_from_json(json doc, std::optional<ExperimentKind> kind = std::nullopt,
                                             const ConfigOverrides& over = {}) {
  detail::check_keys(doc, {"kind", "model", "initial", "replicates", "n_list", "seed", "output", "workers", "experiment"},
                     "");
  ExperimentConfig c;
  if (doc.contains("kind")) {
    const std::string k = detail::text(doc, "kind", "");
    const auto parsed = parse_experiment_kind(k);
    if (!parsed) fail(ErrorKind::invalid_config, "unknown experiment kind '" + k + "'", "kind");
    if (kind && *kind != *parsed)
      fail(ErrorKind::invalid_config,
           "config is for '" + k + "' but '" + std::string(to_string(*kind)) + "' was requested", "kind");
    c.kind = *parsed;
  } else if (kind) {
    c.kind = *kind;
  } else {
    fail(ErrorKind::invalid_config, "experiment kind missing", "kind");
  }
  doc["kind"] = std::string(to_string(c.kind));
  if (over.seed) doc["seed"] = *over.seed;
  if (over.replicates) doc["replicates"] = *over.replicates;
  if (over.output) doc["output"] = *over.output;

  if (!doc.contains("model")) fail(ErrorKind::invalid_config, "missing model section", "model");
  c.model = model_from_json(doc["model"]);
  if (!doc.contains("initial")) fail(ErrorKind::invalid_config, "missing initial law", "initial");
  c.initial = initial_from_json(doc["initial"], c.model.space);
  c.replicates = detail::integer(doc, "replicates", "", 100);
  if (c.replicates == 0) fail(ErrorKind::invalid_config, "replicates must be positive", "replicates");
  c.seed = detail::integer(doc, "seed", "", 1);
  c.workers = static_cast<unsigned>(detail::integer(doc, "workers", "", 0));
  c.output = detail::text(doc, "output", "", "");
  if (doc.contains("n_list")) {
    if (!doc["n_list"].is_array() || doc["n_list"].empty())
      fail(ErrorKind::invalid_config, "expected a nonempty array of integers", "n_list");
    for (const auto& v : doc["n_list"]) {
      if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
        fail(ErrorKind::invalid_config, "population scales must be positive integers", "n_list");
      c.n_list.push_back(v.get<std::size_t>());
    }
  } else {
    c.n_list = {c.model.n};
  }
  if (doc.contains("experiment")) {
    if (!doc["experiment"].is_object()) fail(ErrorKind::invalid_config, "expected an object", "experiment");
    c.params = doc["experiment"];
  }
  if (c.params.contains("D0") && c.params["D0"].is_number()) {
    const std::string w = minorizing_warning(c.model, c.params["D0"].get<double>());
    if (!w.empty()) c.warnings.push_back(w);
  }
  // Normalize defaults so equivalent documents hash alike.
  doc["seed"] = c.seed;
  doc["replicates"] = c.replicates;
  doc["n_list"] = c.n_list;
  c.source = std::move(doc);
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::invalid_config, std::string("malformed JSON: ") + e.what(), "config");
  }
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path, std::optional<ExperimentKind> kind = {},
                                        const ConfigOverrides& over = {}) {
  return experiment_from_json(read_json_file(path), kind, over);
}

/// FNV-1a over the canonical dump (sorted keys) of everything that can
/// change numeric output; output directory and worker count are left out.
inline std::string config_hash(const ExperimentConfig& c) {
  json h = c.source;
  h.erase("output");
  h.erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(h.dump())));
  return buf;
}

}  // namespace histflow
