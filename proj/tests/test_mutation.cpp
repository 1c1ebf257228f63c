#include <gtest/gtest.h>

#include <cmath>

#include "histflow/mutation.hpp"
#include "histflow/stats.hpp"

using namespace histflow;

namespace {
const TraitSpace kLine = TraitSpace::euclidean(1);
}

TEST(Mutation, DegenerateGaussianStaysPut) {
  auto k = MutationKernel::gaussian(1e-12);
  Stream rng(1);
  for (std::size_t n : {1u, 10u, 1000u})
    for (int i = 0; i < 100; ++i) EXPECT_NEAR(sample_mutant(k, kLine, n, Trait(2.5), rng)[0], 2.5, 1e-6);
}

TEST(Mutation, GaussianMomentsMatchSigmaSquaredOverN) {
  auto k = MutationKernel::gaussian(1.0);
  Stream rng(2);
  SampleMoments m;
  for (int i = 0; i < 100000; ++i) m.add(sample_mutant(k, kLine, 4, Trait(0.0), rng)[0]);
  EXPECT_LE(std::abs(m.mean()), 3 * m.standard_error());
  EXPECT_LE(std::abs(m.variance() - 0.25), 3 * m.variance_standard_error());
}

TEST(Mutation, DisplacementVarianceScalesAsInverseN) {
  auto k = MutationKernel::gaussian(1.5);
  Stream rng(3);
  std::vector<double> lx, ly;
  for (std::size_t n : {10u, 100u, 1000u}) {
    SampleMoments m;
    for (int i = 0; i < 20000; ++i) m.add(sample_mutant(k, kLine, n, Trait(1.0), rng)[0] - 1.0);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(m.variance()));
  }
  const double mx = (lx[0] + lx[1] + lx[2]) / 3, my = (ly[0] + ly[1] + ly[2]) / 3;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  EXPECT_NEAR(sxy / sxx, -1.0, 0.1);
}

TEST(Mutation, FiniteJumpPointMass) {
  auto space = TraitSpace::finite({"A", "B", "C"}, {0, 1, 1, 1, 0, 1, 1, 1, 0});
  auto k = MutationKernel::finite_jump(3, {0.5, 0, 0.5, 0, 0, 1, 1, 0, 0});
  Stream rng(4);
  // Row A: diagonal dropped, all mass on C.
  EXPECT_EQ(k.jump_probability(0, 2), 1.0);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_mutant(k, space, 7, Trait::label(0), rng), Trait::label(2));
}

TEST(Mutation, FiniteJumpRowsRenormalized) {
  auto k = MutationKernel::finite_jump(3, {1, 1, 2, 3, 3, 3, 0, 5, 5});
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) s += k.jump_probability(i, j);
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_EQ(k.jump_probability(i, i), 0.0);
  }
  EXPECT_NEAR(k.jump_probability(0, 2), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(MutationKernel::finite_jump(2, {1, 0, 0, 1}), Error);
}

TEST(Mutation, TruncatedGaussianStaysInsideAndCapsAttempts) {
  auto space = TraitSpace::interval(0.0, 1.0);
  auto k = MutationKernel::truncated_gaussian(3.0);
  Stream rng(5);
  for (int i = 0; i < 5000; ++i) {
    const double v = sample_mutant(k, space, 2, Trait(0.95), rng)[0];
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  auto tiny = TraitSpace::interval(0.0, 1e-12);
  auto wide = MutationKernel::truncated_gaussian(1e6);
  try {
    sample_mutant(wide, tiny, 1, Trait(0.0), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capacity);
  }
}

TEST(Mutation, OffspringCloneAndMutantFrequencies) {
  auto k = MutationKernel::gaussian(1.0);
  Stream rng(6);
  for (int i = 0; i < 1000; ++i) {
    auto o = sample_offspring_trait(k, kLine, 10, 0.0, Trait(1.0), rng);
    EXPECT_FALSE(o.mutant);
    EXPECT_EQ(o.trait, Trait(1.0));
    EXPECT_TRUE(sample_offspring_trait(k, kLine, 10, 1.0, Trait(1.0), rng).mutant);
  }
  const int N = 100000;
  int hits = 0;
  for (int i = 0; i < N; ++i) hits += sample_offspring_trait(k, kLine, 10, 0.3, Trait(1.0), rng).mutant;
  const double se = std::sqrt(0.3 * 0.7 / N);
  EXPECT_LE(std::abs(hits / double(N) - 0.3), 3 * se);
}

TEST(Mutation, SpineJumpMutantFrequency) {
  auto k = MutationKernel::gaussian(1.0);
  Stream rng(7);
  for (int i = 0; i < 1000; ++i) EXPECT_FALSE(sample_spine_jump(k, kLine, 10, 0.0, Trait(1.0), rng).mutant);
  const int N = 100000;
  for (double p : {1.0, 0.5}) {
    int hits = 0;
    for (int i = 0; i < N; ++i) hits += sample_spine_jump(k, kLine, 10, p, Trait(1.0), rng).mutant;
    const double q = p / 2;
    EXPECT_LE(std::abs(hits / double(N) - q), 3 * std::sqrt(q * (1 - q) / N));
  }
}

TEST(Generator, ConstantFunctionGivesZero) {
  Stream rng(8);
  TestFunction f{FunctionKind::constant, 3.0, {}};
  auto fin = MutationKernel::finite_jump(2, {0, 1, 1, 0});
  auto space = TraitSpace::finite({"A", "B"}, {0, 1, 1, 0});
  EXPECT_EQ(generator_apply(fin, space, 10, f, Trait::label(0), 0, rng).value, 0.0);
  auto g = MutationKernel::gaussian(1.0);
  auto est = generator_apply(g, kLine, 10, f, Trait(0.3), 1000, rng);
  EXPECT_LE(std::abs(est.value), 3 * est.standard_error);
}

TEST(Generator, FiniteExactSum) {
  Stream rng(9);
  auto space = TraitSpace::finite({"A", "B"}, {0, 1, 1, 0});
  auto k = MutationKernel::finite_jump(2, {0, 1, 1, 0});
  TestFunction f{FunctionKind::table, 0.0, {0.0, 1.0}};
  EXPECT_EQ(generator_apply(k, space, 10, f, Trait::label(0), 0, rng).value, 10.0);
}

TEST(Generator, SquareSecondMomentIdentity) {
  Stream rng(10);
  auto k = MutationKernel::gaussian(1.0);
  TestFunction f{FunctionKind::square, 0.0, {}};
  for (std::size_t n : {5u, 50u}) {
    auto mc = generator_apply(k, kLine, n, f, Trait(0.0), 200000, rng);
    EXPECT_LE(std::abs(mc.value - 1.0), 3 * mc.standard_error);
    EXPECT_NEAR(generator_apply(k, kLine, n, f, Trait(0.0), 0, rng).value, 1.0, 1e-12);
  }
}

TEST(Generator, ClosedFormAgreesWithQuadrature) {
  // Trapezoid quadrature of n E[f(x + sZ) - f(x)] as an independent oracle.
  Stream rng(11);
  auto k = MutationKernel::gaussian(1.3);
  TestFunction f{FunctionKind::sin, 0.0, {}};
  for (std::size_t n : {10u, 1000u}) {
    const double s = 1.3 / std::sqrt(double(n));
    for (double x : {-2.0, 0.3, 1.7}) {
      double acc = 0;
      const double h = 1e-3;
      for (double z = -12; z <= 12; z += h)
        acc += (std::sin(x + s * z) - std::sin(x)) * std::exp(-z * z / 2) / std::sqrt(2 * M_PI) * h;
      const double closed = generator_apply(k, kLine, n, f, Trait(x), 0, rng).value;
      EXPECT_NEAR(closed, n * acc, 1e-9 * std::max(1.0, std::abs(n * acc)));
    }
  }
}

TEST(Generator, ClosedFormAgreesWithMonteCarloIn2D) {
  Stream rng(12);
  auto space = TraitSpace::euclidean(2);
  auto k = MutationKernel::gaussian(1.0);
  TestFunction f{FunctionKind::sin, 0.0, {}};
  const Trait x{0.4, -1.1};
  auto closed = generator_apply(k, space, 20, f, x, 0, rng);
  auto mc = generator_apply(k, space, 20, f, x, 200000, rng);
  EXPECT_LE(std::abs(closed.value - mc.value), 3 * mc.standard_error);
}

TEST(Generator, SinConvergesToHalfLaplacian) {
  Stream rng(13);
  auto k = MutationKernel::gaussian(1.0);
  TestFunction f{FunctionKind::sin, 0.0, {}};
  std::vector<Trait> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(Trait(-3.0 + 0.3 * i));
  auto rep = generator_convergence_report(k, kLine, f, default_generator_target(k, f), grid,
                                          {100, 1000, 10000}, 0, rng);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_TRUE(rep.converging);
  // Discrepancy is sup|sin| * |n expm1(-1/(2n)) + 1/2|, about 1/(8n).
  for (const auto& row : rep.rows) EXPECT_NEAR(row.sup_discrepancy * 8.0 * row.n, 1.0, 0.02);
}

TEST(Generator, FiniteKernelFlaggedNonConvergent) {
  Stream rng(14);
  auto space = TraitSpace::finite({"A", "B", "C"}, {0, 1, 2, 1, 0, 1, 2, 1, 0});
  auto k = MutationKernel::finite_jump(3, {0, 1, 1, 1, 0, 1, 1, 1, 0});
  TestFunction f{FunctionKind::table, 0.0, {0.0, 1.0, 3.0}};
  std::vector<Trait> grid{Trait::label(0), Trait::label(1), Trait::label(2)};
  auto rep = generator_convergence_report(k, space, f, default_generator_target(k, f), grid, {10, 100, 1000}, 0, rng);
  EXPECT_FALSE(rep.converging);
  EXPECT_NEAR(rep.rows[1].sup_discrepancy, 10 * rep.rows[0].sup_discrepancy, 1e-9);
  TestFunction c{FunctionKind::constant, 2.0, {}};
  auto flat = generator_convergence_report(k, space, c, default_generator_target(k, c), grid, {10, 100}, 0, rng);
  for (const auto& row : flat.rows) EXPECT_EQ(row.sup_discrepancy, 0.0);
}
