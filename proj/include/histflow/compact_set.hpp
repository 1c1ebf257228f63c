#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "histflow/error.hpp"
#include "histflow/modulus.hpp"
#include "histflow/trait_space.hpp"

namespace histflow {

struct EnvelopePoint {
  double delta = 0.5;
  double bound = std::numeric_limits<double>::infinity();
};

/// Compact path set given by a trait region and a modulus envelope on a
/// finite delta grid (sorted by delta, bounds nondecreasing).
struct CompactSetSpec {
  double horizon = 1.0;
  CompactRegion region;
  std::vector<EnvelopePoint> envelope;

  static std::vector<double> default_grid() { return {0.01, 0.02, 0.05, 0.1, 0.25, 0.5}; }

  void validate(const TraitSpace& space) const {
    if (!(horizon > 0.0)) fail(ErrorKind::invalid_config, "compact set horizon must be positive", "K.horizon");
    region.check_compatible(space);
    for (std::size_t j = 0; j < envelope.size(); ++j) {
      const auto& e = envelope[j];
      if (!(e.delta > 0.0 && e.delta < 1.0))
        fail(ErrorKind::invalid_config, "envelope delta must lie in (0,1)", "K.envelope");
      if (!(e.bound >= 0.0)) fail(ErrorKind::invalid_config, "envelope bound must be nonnegative", "K.envelope");
      if (j > 0 && !(envelope[j - 1].delta < e.delta && envelope[j - 1].bound <= e.bound))
        fail(ErrorKind::invalid_config, "envelope must be sorted by delta and nondecreasing", "K.envelope");
    }
  }
};

/// Reusable membership tester; keeps scratch buffers between calls.
class CompactSetTester {
 public:
  bool contains(const TraitSpace& space, const Lineage& y, const CompactSetSpec& K, double T) {
    build_step_path(y, T, path_);
    for (const Trait* v : path_.values)
      if (!K.region.contains_unchecked(space, *v)) return false;
    if (path_.jumps.empty()) return true;
    for (const auto& e : K.envelope) {
      if (std::isinf(e.bound)) continue;
      if (!solver_.feasible(space, path_, e.delta, e.bound)) return false;
    }
    return true;
  }

 private:
  StepPath path_;
  ModulusSolver solver_;
};

/// stop(y, T) has every value in the region and w'(y, delta_j, T) <= w_j
/// at every grid point.
inline bool in_compact_set(const TraitSpace& space, const Lineage& y, const CompactSetSpec& K,
                           double T) {
  check_modulus_query(0.5, T);
  CompactSetTester tester;
  return tester.contains(space, y, K, T);
}

}  // namespace histflow
