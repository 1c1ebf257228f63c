#pragma once

#include <algorithm>
#include <limits>

#include "histflow/error.hpp"
#include "histflow/modulus.hpp"

namespace histflow {

inline constexpr std::size_t kOracleMaxJumps = 12;

/// Exhaustive w'(x, delta, T) for step paths with few jumps. Every run
/// either continues the current interval, starts a new one exactly at its
/// jump, or starts one strictly inside it; spacing constraints are
/// propagated on the infimum of each start. Independent of ModulusSolver
/// apart from the shared StepPath view.
inline double modulus_oracle(const TraitSpace& space, const Lineage& y, double delta, double T) {
  check_modulus_query(delta, T);
  const auto path = step_path(y, T);
  const std::size_t J = path.jumps.size();
  const std::size_t Jp = path.interior_jumps();
  if (Jp > kOracleMaxJumps) fail(ErrorKind::capacity, "oracle supports at most 12 jumps before T");
  if (J == 0) return 0.0;

  double best = std::numeric_limits<double>::infinity();
  // choice[j]: 0 none, 1 cut at s_j, 2 cut inside run j
  std::vector<int> choice(Jp + 1, 0);
  std::size_t combos = 2;
  for (std::size_t j = 1; j <= Jp; ++j) combos *= 3;

  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t rest = code;
    choice[0] = static_cast<int>(rest % 2) * 2;
    rest /= 2;
    for (std::size_t j = 1; j <= Jp; ++j) {
      choice[j] = static_cast<int>(rest % 3);
      rest /= 3;
    }

    double cur = 0.0;
    std::size_t first = 0;
    double worst = 0.0;
    bool ok = true;
    for (std::size_t j = 0; j <= Jp && ok; ++j) {
      if (choice[j] == 1) {
        const double s = path.jumps[j - 1];
        if (!(s > cur + delta)) {
          ok = false;
          break;
        }
        worst = std::max(worst, run_diameter(space, path, first, j - 1));
        cur = s;
        first = j;
      } else if (choice[j] == 2) {
        const double s = j == 0 ? 0.0 : path.jumps[j - 1];
        const double end = j < J ? path.jumps[j] : std::numeric_limits<double>::infinity();
        const double pos = std::max(cur + delta, s);
        if (!(pos < end && pos < T)) {
          ok = false;
          break;
        }
        worst = std::max(worst, run_diameter(space, path, first, j));
        cur = pos;
        first = j;
      }
    }
    if (!ok) continue;
    const std::size_t last = cur + delta < T ? Jp : J;
    worst = std::max(worst, run_diameter(space, path, first, last));
    best = std::min(best, worst);
  }
  return best;
}

}  // namespace histflow
