#pragma once

#include <algorithm>
#include <vector>

#include "histflow/lineage.hpp"
#include "histflow/random.hpp"
#include "histflow/trait_space.hpp"

namespace histflow::gen {

/// Finite space of m points embedded in the plane, so the table is a
/// metric by construction.
inline TraitSpace random_finite_space(Stream& rng, std::size_t m) {
  std::vector<std::string> labels;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < m; ++i) {
    labels.push_back("p" + std::to_string(i));
    xs.push_back(std::round(rng.uniform() * 8.0));
    ys.push_back(std::round(rng.uniform() * 8.0) + 10.0 * static_cast<double>(i));
  }
  std::vector<double> table(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      table[i * m + j] = std::hypot(xs[i] - xs[j], ys[i] - ys[j]);
  return TraitSpace::finite(std::move(labels), std::move(table));
}

inline Trait random_point(Stream& rng, const TraitSpace& space) {
  if (space.kind() == SpaceKind::finite) return Trait::label(rng.index(space.size()));
  // Small integer lattice makes repeated values and ties common.
  return Trait(std::round(rng.uniform() * 6.0 - 3.0) * 0.5);
}

/// Step path with up to `max_records` records after time 0. Times are
/// drawn on a coarse grid part of the time so that near-coincident jumps,
/// jumps at exactly T and gaps of exactly delta all occur.
inline Lineage random_lineage(Stream& rng, const TraitSpace& space, std::size_t max_records,
                              double T = 1.0) {
  const std::size_t k = rng.index(max_records + 1);
  std::vector<double> times;
  for (std::size_t i = 0; i < k; ++i) {
    double t = rng.bernoulli(0.5) ? std::round(rng.uniform() * 20.0) * 0.05 * T
                                  : rng.uniform() * 1.1 * T;
    if (t <= 0.0) t = 0.01 * T;
    times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  Lineage y = Lineage::constant(random_point(rng, space));
  for (double t : times) y = y.extended(t, random_point(rng, space));
  return y;
}

}  // namespace histflow::gen
