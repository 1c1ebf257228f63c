#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "histflow/compact_set.hpp"
#include "histflow/error.hpp"
#include "histflow/lineage.hpp"
#include "histflow/simulator.hpp"
#include "histflow/trait_space.hpp"

namespace histflow {

using json = nlohmann::json;

// Doubles are written in shortest round-trip form and read back with
// strtod, so values survive a dump/parse cycle bit for bit.

inline json trait_to_json(const Trait& x) {
  const auto c = x.coords();
  return json(std::vector<double>(c.begin(), c.end()));
}

/// Accepts a coordinate array, a bare number, or on finite spaces a label
/// name.
inline Trait trait_from_json(const json& j, const TraitSpace& space, const std::string& field) {
  Trait x;
  if (j.is_number()) {
    x = Trait(j.get<double>());
  } else if (j.is_string()) {
    if (space.kind() != SpaceKind::finite)
      fail(ErrorKind::invalid_config, "label names are only valid on finite spaces", field);
    try {
      x = Trait::label(space.label_index(j.get<std::string>()));
    } catch (const Error& e) {
      fail(ErrorKind::invalid_config, e.what(), field);
    }
  } else if (j.is_array() && !j.empty() && std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number(); })) {
    const auto c = j.get<std::vector<double>>();
    x = Trait(std::span<const double>(c));
  } else {
    fail(ErrorKind::invalid_config, "trait must be a number, a coordinate array or a label", field);
  }
  if (!space.contains(x)) fail(ErrorKind::invalid_config, "trait point does not belong to the space", field);
  return x;
}

inline json lineage_to_json(const Lineage& y) {
  json records = json::array();
  for (const auto& r : y.records()) records.push_back({{"time", r.time}, {"trait", trait_to_json(r.trait)}});
  json j{{"records", std::move(records)}};
  j["stop_time"] = y.stop_time() ? json(*y.stop_time()) : json(nullptr);
  return j;
}

inline Lineage lineage_from_json(const json& j) {
  if (!j.is_object() || !j.contains("records") || !j["records"].is_array())
    fail(ErrorKind::invalid_config, "lineage needs a records array", "records");
  std::vector<Record> records;
  for (const auto& r : j["records"]) {
    if (!r.contains("time") || !r["time"].is_number() || !r.contains("trait") || !r["trait"].is_array())
      fail(ErrorKind::invalid_config, "lineage record needs time and trait", "records");
    const auto c = r["trait"].get<std::vector<double>>();
    records.push_back({r["time"].get<double>(), Trait(std::span<const double>(c))});
  }
  std::optional<double> stop;
  if (j.contains("stop_time") && !j["stop_time"].is_null()) stop = j["stop_time"].get<double>();
  return Lineage::from_records(records, stop);
}

inline json event_to_json(const Event& e) {
  json j{{"time", e.time}, {"kind", to_string(e.kind)}, {"label", e.label}};
  if (e.is_birth()) {
    j["child"] = e.child;
    j["trait"] = trait_to_json(e.trait);
  }
  j["majorant"] = e.majorant;
  j["rate"] = e.rate;
  j["uniform"] = e.uniform;
  return j;
}

/// Line-delimited log: a header line with n, end time and the initial
/// atoms, then one line per event.
inline void write_event_log(const EventLog& log, std::ostream& out, const std::string& config_hash = {}) {
  json header{{"n", log.n}, {"end_time", log.end_time}, {"initial_next_label", log.initial_next_label}};
  if (!config_hash.empty()) header["config_hash"] = config_hash;
  json atoms = json::array();
  for (const auto& a : log.initial) atoms.push_back({{"label", a.label}, {"lineage", lineage_to_json(a.lineage)}});
  header["initial"] = std::move(atoms);
  out << header.dump() << '\n';
  for (const auto& e : log.events) out << event_to_json(e).dump() << '\n';
}

inline json region_to_json(const CompactRegion& r) {
  switch (r.kind) {
    case RegionKind::ball: return {{"kind", "ball"}, {"center", trait_to_json(r.center)}, {"radius", r.radius}};
    case RegionKind::box: return {{"kind", "box"}, {"lo", r.lo}, {"hi", r.hi}};
    case RegionKind::all_points: return {{"kind", "all_points"}};
  }
  return {};
}

inline json compact_set_to_json(const CompactSetSpec& K) {
  json env = json::array();
  for (const auto& e : K.envelope)
    env.push_back({{"delta", e.delta}, {"bound", std::isinf(e.bound) ? json(nullptr) : json(e.bound)}});
  return {{"horizon", K.horizon}, {"region", region_to_json(K.region)}, {"envelope", std::move(env)}};
}

}  // namespace histflow
