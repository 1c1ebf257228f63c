#include <gtest/gtest.h>

#include <cmath>

#include "histflow/couplings.hpp"
#include "histflow/poisson_tail.hpp"
#include "histflow/stats.hpp"

using namespace histflow;

namespace {

ModelConfig competitive(std::size_t n) {
  ModelConfig cfg;
  cfg.n = n;
  cfg.r = RateForm::constant(1.0);
  cfg.b = RateForm::constant(0.5);
  cfg.D = RateForm::constant(0.5);
  cfg.U = InteractionForm::constant(1.0);
  cfg.p = 0.3;
  cfg.kernel = MutationKernel::gaussian(1.0);
  cfg.bounds = {1.0, 1.0, 1.0, 0.5, 1.0};
  return cfg;
}

PopulationState start(const ModelConfig& cfg, double m0, Trait x = Trait(0.0)) {
  InitialLaw law;
  law.mass = m0;
  law.point = std::move(x);
  Stream rng(0);
  return make_initial(cfg, law, rng);
}

bool same_atoms(const PopulationState& a, const PopulationState& b) {
  if (a.atoms.size() != b.atoms.size()) return false;
  for (std::size_t i = 0; i < a.atoms.size(); ++i)
    if (a.atoms[i].label != b.atoms[i].label || !(a.atoms[i].lineage == b.atoms[i].lineage)) return false;
  return true;
}

// Trapezoid integral of 2 n r + B_hi from t0 over [t0, t0 + u].
double hazard_integral(const ModelConfig& cfg, double t0, const Trait& x, double since, double u) {
  const int steps = 20000;
  double acc = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double s = t0 + u * i / steps;
    const double h = 2.0 * cfg.nd() * cfg.r(cfg.space, s, x, since) + cfg.bounds.b_hi;
    acc += (i == 0 || i == steps) ? 0.5 * h : h;
  }
  return acc * u / steps;
}

}  // namespace

TEST(Dominate, FixedPointAndBounds) {
  ModelConfig cfg;
  cfg.n = 7;
  cfg.b = RateForm::constant(0.8);
  cfg.bounds = {1.0, 1.0, 0.8, 0.0, 0.0};
  const auto d = dominate(cfg);
  EXPECT_EQ(d.b.base, 0.8);
  EXPECT_EQ(d.D.base, 0.0);
  EXPECT_TRUE(d.U.is_zero());
  EXPECT_EQ(d.bounds.b_hi, cfg.bounds.b_hi);

  auto c = competitive(10);
  const auto e = dominate(c);
  EXPECT_TRUE(e.U.is_zero());
  EXPECT_EQ(e.bounds.b_hi, 1.0);
  EXPECT_EQ(e.bounds.d_hi, 0.0);
  EXPECT_EQ(e.bounds.u_hi, 0.0);
  EXPECT_EQ(e.b.base, 1.0);
  EXPECT_EQ(dominate(c, false).b.base, 0.5);
  validate(e);
}

TEST(Coupling, DominatedConfigGivesIdenticalPopulations) {
  auto cfg = dominate(competitive(10));
  auto init = start(cfg, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Stream rng = derive_stream(seed, 0, "coupling");
    auto run = run_dominating_coupling(cfg, init, rng);
    EXPECT_EQ(run.violations, 0u);
    EXPECT_TRUE(same_atoms(run.base_final, run.companion_final));
    for (const auto& e : run.correspondence) EXPECT_EQ(e.base_count, e.companion_count);
  }
}

TEST(Coupling, SubsetAuditHoldsWithCompetitionAndLags) {
  auto cfg = competitive(15);
  cfg.b = RateForm::trait(0.2, 0.5, Trait(0.0), 0.0, 1.0);
  cfg.U = InteractionForm::gaussian_distance(1.0, 0.5);
  cfg.lags = {{0.0, 0.5}, {0.3, 0.5}};
  validate(cfg);
  auto init = start(cfg, 1.0);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Stream rng = derive_stream(seed, 0, "coupling");
    auto run = run_dominating_coupling(cfg, init, rng);
    EXPECT_EQ(run.violations, 0u);
    EXPECT_EQ(run.audits, run.correspondence.size() + 1);
    for (const auto& e : run.correspondence) EXPECT_LE(e.base_count, e.companion_count);
  }
}

TEST(Coupling, LogsReplayToFinalStates) {
  auto cfg = competitive(10);
  Stream rng = derive_stream(4, 0, "coupling");
  auto run = run_dominating_coupling(cfg, start(cfg, 1.0), rng);
  EXPECT_TRUE(same_atoms(replay(run.base), run.base_final));
  EXPECT_TRUE(same_atoms(replay(run.companion), run.companion_final));
}

// The base marginal must be the original model: its terminal mass is
// compared against the plain simulator on independent streams.
TEST(Coupling, BaseMarginalMatchesDirectSimulation) {
  auto cfg = competitive(10);
  auto init = start(cfg, 1.0);
  SampleMoments base, direct, comp;
  for (std::uint64_t k = 0; k < 1500; ++k) {
    Stream a = derive_stream(11, k, "coupling");
    auto run = run_dominating_coupling(cfg, init, a, {true, false});
    base.add(run.base_final.mass());
    comp.add(run.companion_final.mass());
    Stream b = derive_stream(12, k, "direct");
    auto s = init;
    simulate(cfg, s, b);
    direct.add(s.mass());
  }
  EXPECT_TRUE(within_combined_se(base.mean(), base.standard_error(), direct.mean(), direct.standard_error()))
      << base.mean() << " vs " << direct.mean();
  // Companion: b = 1, no extra deaths, mean e^{T}.
  EXPECT_TRUE(within_combined_se(comp.mean(), comp.standard_error(), std::exp(1.0), 0.0))
      << comp.mean();
  EXPECT_GT(comp.mean() - base.mean(), 3.0 * std::hypot(comp.standard_error(), base.standard_error()));
}

TEST(Coupling, RateOrderingBreachIsReported) {
  auto cfg = competitive(10);
  cfg.b = RateForm::constant(2.0);  // above B_hi = 1
  Stream rng(1);
  try {
    run_dominating_coupling(cfg, start(cfg, 1.0), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::coupling_violation);
  }
}

TEST(Minorizing, LimitArithmetic) {
  ModelConfig cfg;
  cfg.bounds = {1.0, 1.0, 0.0, 0.0, 0.0};
  cfg.horizon = 1.0;
  EXPECT_EQ(minorizing_limit(cfg.bounds, 1.0), 4.0);
  EXPECT_TRUE(minorizing_warning(cfg, 0.9 * 4.0).empty());
  EXPECT_FALSE(minorizing_warning(cfg, 4.0).empty());
  EXPECT_FALSE(minorizing_warning(cfg, 50.0).empty());
}

TEST(Minorizing, MeanMassDecaysExponentially) {
  ModelConfig cfg;
  cfg.n = 20;
  cfg.bounds = {1.0, 1.0, 0.0, 0.0, 0.0};
  auto init = start(cfg, 1.0);
  for (double D0 : {0.0, 0.5}) {
    const std::vector<double> ts{0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<SampleMoments> m(ts.size());
    for (std::uint64_t k = 0; k < 2000; ++k) {
      Stream rng = derive_stream(5, k, "minorizing");
      auto run = run_minorizing(cfg, init, D0, rng);
      EXPECT_TRUE(run.warning.empty());
      for (std::size_t j = 0; j < ts.size(); ++j) m[j].add(run.mass.at(ts[j]));
    }
    for (std::size_t j = 0; j < ts.size(); ++j)
      EXPECT_TRUE(within_combined_se(m[j].mean(), m[j].standard_error(), std::exp(-D0 * ts[j]), 0.0))
          << "D0=" << D0 << " t=" << ts[j] << " mean " << m[j].mean();
  }
}

TEST(Minorizing, StartsFromRestrictedPopulation) {
  ModelConfig cfg;
  cfg.n = 10;
  cfg.bounds = {1.0, 1.0, 0.0, 0.0, 0.0};
  auto s = make_population(10, {Trait(0.0), Trait(5.0), Trait(6.0)});
  auto z = restrict_population(s, [](const Atom& a) { return a.lineage.tip_trait()[0] > 1.0; });
  EXPECT_EQ(z.count(), 2u);
  Stream rng(3);
  auto run = run_minorizing(cfg, z, 0.1, rng);
  EXPECT_DOUBLE_EQ(run.mass.masses.front(), 0.2);
}

TEST(Survival, TinyHorizonSurvivesAlmostSurely) {
  ModelConfig cfg;
  cfg.n = 50;
  cfg.bounds = {1.0, 1.0, 0.0, 0.0, 0.0};
  InitialLaw law;
  law.point = Trait(0.0);
  law.mass = 1.0;
  auto est = estimate_survival(cfg, law, 0.0, 0.1, 1e-3, 200, 9);
  EXPECT_EQ(est.successes, 200u);
  EXPECT_LE(est.ci.lo, 1.0);
  EXPECT_GT(est.ci.lo, 0.95);
}

TEST(Survival, HugeDeathShiftDropsAndWarns) {
  ModelConfig cfg;
  cfg.n = 50;
  cfg.bounds = {1.0, 1.0, 0.0, 0.0, 0.0};
  InitialLaw law;
  law.point = Trait(0.0);
  law.mass = 0.1;
  auto mild = estimate_survival(cfg, law, 0.5, 0.1, 1.0, 400, 10);
  auto harsh = estimate_survival(cfg, law, 40.0, 0.1, 1.0, 400, 10);
  EXPECT_TRUE(mild.warning.empty());
  EXPECT_FALSE(harsh.warning.empty());
  EXPECT_LT(harsh.ci.hi, mild.ci.lo);
}

TEST(Survival, StartBelowEpsilonRejected) {
  ModelConfig cfg;
  cfg.n = 10;
  cfg.bounds = {1.0, 1.0, 0.0, 0.0, 0.0};
  InitialLaw law;
  law.point = Trait(0.0);
  law.mass = 0.04;
  EXPECT_THROW(estimate_survival(cfg, law, 0.1, 0.1, 1.0, 10, 1), Error);
}

TEST(Spine, HazardInversionMatchesQuadrature) {
  ModelConfig cfg;
  cfg.n = 3;
  cfg.bounds = {0.5, 2.0, 0.7, 0.0, 0.0};
  const Trait x(0.0);
  for (double slope : {1.5, -1.5}) {
    cfg.r = RateForm::age(slope > 0 ? 0.5 : 2.0, slope, 0.5, 2.0);
    for (double t0 : {0.0, 0.3, 1.2, 3.0})
      for (double budget : {0.01, 0.5, 2.0, 9.0, 40.0}) {
        const double since = 0.2 * t0;
        const double u = invert_spine_hazard(cfg, t0, x, since, budget);
        EXPECT_NEAR(hazard_integral(cfg, t0, x, since, u), budget, 1e-6 * budget)
            << "slope " << slope << " t0 " << t0 << " budget " << budget;
      }
  }
  cfg.r = RateForm::constant(1.5);
  EXPECT_DOUBLE_EQ(invert_spine_hazard(cfg, 0.4, x, 0.0, 2.0), 2.0 / (9.0 + 0.7));
}

TEST(Spine, PairWithMaximalRateHasIdenticalJumps) {
  ModelConfig cfg;
  cfg.n = 5;
  cfg.b = RateForm::constant(0.3);
  cfg.bounds = {1.0, 1.0, 0.3, 0.0, 0.0};
  cfg.p = 0.5;
  for (std::uint64_t k = 0; k < 100; ++k) {
    auto sp = spine_pair(cfg, Trait(0.0), 1.0, 21, k);
    EXPECT_EQ(sp.jumps_y, sp.jumps_ybar);
    EXPECT_TRUE(sp.y == sp.ybar);
  }
}

TEST(Spine, PairDominatesPathwise) {
  ModelConfig cfg;
  cfg.n = 5;
  cfg.r = RateForm::trait(0.5, 0.4, Trait(0.0), 0.5, 2.0);
  cfg.b = RateForm::constant(0.3);
  cfg.bounds = {0.5, 2.0, 0.3, 0.0, 0.0};
  cfg.p = 0.6;
  validate(cfg);
  for (std::uint64_t k = 0; k < 2000; ++k) {
    auto sp = spine_pair(cfg, Trait(0.0), 1.0, 22, k);
    ASSERT_LE(sp.jumps_y, sp.jumps_ybar);
    for (std::size_t j = 0; j < sp.jumps_y; ++j) ASSERT_LE(sp.gaps_ybar[j], sp.gaps_y[j]);
    const auto ry = sp.y.records();
    const auto rb = sp.ybar.records();
    for (std::size_t j = 0; j < ry.size(); ++j) ASSERT_TRUE(ry[j].trait == rb[j].trait);
  }
}

TEST(Spine, DominatingJumpCountIsPoisson) {
  ModelConfig cfg;
  cfg.n = 4;
  cfg.r = RateForm::trait(0.5, 0.4, Trait(0.0), 0.5, 2.0);
  cfg.bounds = {0.5, 2.0, 0.5, 0.0, 0.0};
  cfg.p = 0.5;
  const double lambda = 1.0 * (2.0 * 4 * 2.0 + 0.5);
  SampleMoments m;
  for (std::uint64_t k = 0; k < 10000; ++k) m.add(static_cast<double>(spine_pair(cfg, Trait(0.0), 1.0, 23, k).jumps_ybar));
  EXPECT_TRUE(within_combined_se(m.mean(), m.standard_error(), lambda, 0.0)) << m.mean();
  EXPECT_TRUE(within_combined_se(m.variance(), m.variance_standard_error(), lambda, 0.0)) << m.variance();
}

TEST(Spine, NoMutationKeepsPathConstant) {
  ModelConfig cfg;
  cfg.n = 10;
  cfg.p = 0.0;
  Stream rng(2);
  auto s = sample_spine(cfg, Trait(1.5), 1.0, rng);
  EXPECT_GT(s.jumps, 0u);
  EXPECT_EQ(s.path.record_count(), s.jumps + 1);
  for (const auto& r : s.path.records()) EXPECT_EQ(r.trait[0], 1.5);
}

TEST(Spine, JumpCountMean) {
  ModelConfig cfg;
  cfg.n = 10;
  cfg.p = 0.5;
  SampleMoments m;
  for (std::uint64_t k = 0; k < 10000; ++k) {
    Stream rng = derive_stream(30, k, "spine");
    m.add(static_cast<double>(sample_spine(cfg, Trait(0.0), 0.5, rng).jumps));
  }
  EXPECT_TRUE(within_combined_se(m.mean(), m.standard_error(), 20.0 * 0.5, 0.0)) << m.mean();
}

TEST(PoissonTail, SmallMeanAgainstSeries) {
  double head = 0.0, term = std::exp(-1.0);
  for (int k = 0; k < 10; ++k) {
    head += term;
    term /= (k + 1);
  }
  // direct tail series from k = 10 onward, summed without cancellation
  double tail = 0.0;
  term = std::exp(-1.0);
  for (int k = 1; k <= 10; ++k) term /= k;
  for (int k = 10; k < 60; ++k) {
    tail += term;
    term /= (k + 1);
  }
  EXPECT_NEAR(poisson_upper_tail(1.0, 10), tail, 1e-12 * tail);
  EXPECT_NEAR(poisson_upper_tail(1.0, 10), 1.1142547833872068e-07, 1e-20);
  EXPECT_NEAR(1.0 - head, tail, 1e-15);
}

TEST(PoissonTail, ThresholdZeroAndBelowMean) {
  EXPECT_EQ(poisson_upper_tail(3.0, 0), 1.0);
  // P(Pois(20) >= 10) = 1 - P(Pois(20) <= 9)
  double cdf = 0.0, term = std::exp(-20.0);
  for (int k = 0; k <= 9; ++k) {
    cdf += term;
    term *= 20.0 / (k + 1);
  }
  EXPECT_NEAR(poisson_upper_tail(20.0, 10), 1.0 - cdf, 1e-14);
}

TEST(PoissonTail, NoOverflowAtLargeMeans) {
  for (double mu : {1e3, 1e5, 1e6}) {
    for (double f : {0.5, 0.99, 1.0, 1.01, 1.5, 3.0}) {
      const auto k = static_cast<std::uint64_t>(f * mu);
      const double lt = log_poisson_upper_tail(mu, k);
      EXPECT_TRUE(std::isfinite(lt) || lt == -std::numeric_limits<double>::infinity());
      EXPECT_LE(lt, 0.0);
    }
    // near the mean the tail is about one half
    EXPECT_NEAR(poisson_upper_tail(mu, static_cast<std::uint64_t>(mu)), 0.5, 0.02);
  }
}

TEST(PoissonTail, BoundDecreasesInA) {
  RateBounds b{1.0, 1.0, 0.5, 0.0, 0.0};
  double prev = 2.0;
  for (double A : {1.0, 2.0, 3.0, 4.0, 6.0, 8.0}) {
    const auto pt = poisson_tail(20, 1.0, b, A);
    EXPECT_LE(pt.tail, prev);
    prev = pt.tail;
    EXPECT_DOUBLE_EQ(pt.lambda, 40.5);
    EXPECT_DOUBLE_EQ(pt.c, 0.25);
    EXPECT_EQ(pt.tail_not_small, A <= 2.0 * 40.5 / 20.0);
  }
  EXPECT_THROW(poisson_tail(20, 1.0, b, 0.01), Error);
}

// (n R_lo + B) / (2 n R_lo + B) <= (1 + c / n) / 2 with c = B / (2 R_lo).
TEST(PoissonTail, KeepProbabilityBoundIdentity) {
  for (double R : {0.3, 1.0, 2.5})
    for (double B : {0.0, 0.4, 3.0})
      for (std::size_t n : {1u, 5u, 100u}) {
        const double nd = static_cast<double>(n);
        const double p = (nd * R + B) / (2.0 * nd * R + B);
        const double c = B / (2.0 * R);
        EXPECT_LE(p, 0.5 * (1.0 + c / nd) + 1e-15);
        EXPECT_GE(p, 0.5);
      }
}
