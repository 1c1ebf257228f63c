#include <gtest/gtest.h>

#include "generators.hpp"
#include "histflow/compact_set.hpp"
#include "histflow/modulus.hpp"
#include "histflow/modulus_oracle.hpp"

using namespace histflow;

namespace {

const TraitSpace kLine = TraitSpace::euclidean(1);

Lineage path(std::initializer_list<std::pair<double, double>> recs) {
  std::vector<Record> rs;
  for (auto [t, x] : recs) rs.push_back({t, Trait(x)});
  return Lineage::from_records(rs);
}

}  // namespace

TEST(Lineage, Eval) {
  auto a = Trait(1.0), b = Trait(2.0);
  EXPECT_EQ(Lineage::constant(a).eval(5.0), a);
  auto y = path({{0, 1}, {1, 2}});
  EXPECT_EQ(y.eval(1.0), b);
  EXPECT_EQ(y.eval(0.999), a);
  EXPECT_EQ(y.stopped(0.5).eval(2.0), a);
}

TEST(Lineage, LeftLimit) {
  auto y = path({{0, 1}, {1, 2}});
  EXPECT_EQ(y.left_limit(1.0), Trait(1.0));
  EXPECT_EQ(y.left_limit(1.5), Trait(2.0));
  EXPECT_EQ(Lineage::constant(Trait(7.0)).left_limit(0.3), Trait(7.0));
  try {
    y.left_limit(0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
}

TEST(Lineage, StopIsIdempotentAndFreezes) {
  auto y = path({{0, 1}, {1, 2}, {2, 3}});
  EXPECT_EQ(stop(stop(y, 1), 1), stop(y, 1));
  auto z = stop(y, 0.5);
  for (double s : {0.0, 0.5, 1.0, 3.0}) EXPECT_EQ(z.eval(s), Trait(1.0));
  auto w = stop(y, 10);
  for (double s : {0.0, 1.0, 2.5, 20.0}) EXPECT_EQ(w.eval(s), y.eval(s));
}

TEST(Lineage, Concat) {
  auto y = path({{0, 1}, {0.5, 2}});
  auto w = path({{0, 5}, {0.25, 6}});
  auto z = concat(y, 0.0, w);
  for (double s : {0.0, 0.1, 0.25, 0.7}) EXPECT_EQ(z.eval(s), w.eval(s));
  auto c = concat(Lineage::constant(Trait(1.0)), 1.0, Trait(2.0));
  EXPECT_EQ(c.eval(0.999), Trait(1.0));
  EXPECT_EQ(c.eval(1.0), Trait(2.0));
  auto same = concat(y, 1.0, y.left_limit(1.0));
  for (double s : {0.0, 0.4, 0.5, 0.9, 1.0, 4.0}) EXPECT_EQ(same.eval(s), y.eval(s));
  auto shifted = concat(y, 0.5, w);
  EXPECT_EQ(shifted.eval(0.49), Trait(1.0));
  EXPECT_EQ(shifted.eval(0.5), Trait(5.0));
  EXPECT_EQ(shifted.eval(0.75), Trait(6.0));
}

TEST(Lineage, ConcatRespectsStoppedPrefix) {
  auto y = stop(path({{0, 1}, {0.5, 2}}), 0.2);
  auto z = concat(y, 1.0, Trait(9.0));
  EXPECT_EQ(z.eval(0.7), Trait(1.0));
  EXPECT_EQ(z.eval(1.0), Trait(9.0));
}

TEST(Lineage, RecordsMustIncrease) {
  std::vector<Record> bad{{0, Trait(1.0)}, {1, Trait(2.0)}, {1, Trait(3.0)}};
  EXPECT_THROW(Lineage::from_records(bad), Error);
  std::vector<Record> late{{0.5, Trait(1.0)}};
  EXPECT_THROW(Lineage::from_records(late), Error);
}

TEST(Lineage, ClonesKeepValueFunction) {
  auto y = path({{0, 1}, {0.3, 1}, {0.6, 2}, {0.8, 2}});
  EXPECT_EQ(y.record_count(), 4u);
  auto p = step_path(y, 1.0);
  ASSERT_EQ(p.jumps.size(), 1u);
  EXPECT_EQ(p.jumps[0], 0.6);
  EXPECT_EQ(y.value_since(), 0.6);
}

TEST(Lineage, DeepChainsReleaseWithoutRecursion) {
  Lineage y = Lineage::constant(Trait(0.0));
  for (int i = 1; i < 400000; ++i) y = y.extended(i * 1e-5, Trait(0.0));
  EXPECT_EQ(y.record_count(), 400000u);
  y = Lineage();
}

TEST(LineageProperty, RightContinuityAndStopConsistency) {
  Stream rng(11);
  for (int i = 0; i < 2000; ++i) {
    auto y = gen::random_lineage(rng, kLine, 8);
    const auto recs = y.records();
    const double t = rng.uniform() * 1.2;
    double next = 1e9;
    for (const auto& r : recs)
      if (r.time > t) next = std::min(next, r.time);
    const double h = std::min(1e-3, (next - t) / 2);
    EXPECT_EQ(y.eval(t + h), y.eval(t));
    const double u = rng.uniform() * 1.2;
    auto z = stop(y, u);
    for (int j = 0; j < 5; ++j) {
      const double s = rng.uniform() * 1.5;
      EXPECT_EQ(z.eval(s), y.eval(std::min(s, u)));
    }
  }
}

TEST(Modulus, WorkedExamples) {
  auto c = Lineage::constant(Trait(0.0));
  EXPECT_EQ(modulus(kLine, c, 0.5, 1.0).value, 0.0);
  auto one = path({{0, 0}, {0.5, 3}});
  EXPECT_EQ(modulus(kLine, one, 0.1, 1.0).value, 0.0);
  auto two = path({{0, 0}, {0.4, 1}, {0.45, 0}});
  EXPECT_EQ(modulus_oracle(kLine, two, 0.1, 1.0), 1.0);
  EXPECT_EQ(modulus(kLine, two, 0.1, 1.0).value, 1.0);
  EXPECT_EQ(modulus_oracle(kLine, one, 0.1, 1.0), 0.0);
  EXPECT_EQ(modulus_oracle(kLine, c, 0.5, 1.0), 0.0);
}

TEST(Modulus, SeparatedJumpsGiveZero) {
  auto y = path({{0, 0}, {0.2, 1}, {0.5, -2}, {0.8, 4}});
  EXPECT_EQ(modulus_oracle(kLine, y, 0.1, 1.0), 0.0);
  EXPECT_EQ(modulus(kLine, y, 0.1, 1.0).value, 0.0);
}

TEST(Modulus, WideDeltaForcesSingleInterval) {
  auto y = path({{0, 0}, {0.2, 1}, {0.3, -2}});
  const double T = 0.4, delta = 0.5;
  EXPECT_EQ(modulus_oracle(kLine, y, delta, T), 3.0);
  EXPECT_EQ(modulus(kLine, y, delta, T).value, 3.0);
}

TEST(Modulus, JumpAtHorizonExcludedWhenFinalIntervalIsLong) {
  // [0.5, 1) can end at T and miss the jump at T; a short final interval cannot.
  auto y = path({{0, 0}, {0.5, 1}, {1.0, 5}});
  EXPECT_EQ(modulus(kLine, y, 0.1, 1.0).value, 0.0);
  auto z = path({{0, 0}, {0.95, 1}, {1.0, 5}});
  EXPECT_EQ(modulus_oracle(kLine, z, 0.1, 1.0), 1.0);
  EXPECT_EQ(modulus(kLine, z, 0.1, 1.0).value, 1.0);
  // delta > T: the only interval must reach past T and so contains the jump at T.
  auto w = path({{0, 0}, {0.45, 1}, {0.5, 5}});
  EXPECT_EQ(modulus_oracle(kLine, w, 0.6, 0.5), 5.0);
  EXPECT_EQ(modulus(kLine, w, 0.6, 0.5).value, 5.0);
}

TEST(Modulus, DomainErrors) {
  auto y = path({{0, 0}, {0.5, 1}});
  for (double d : {0.0, -0.1, 1.0, 1.5}) EXPECT_THROW(modulus(kLine, y, d, 1.0), Error);
  EXPECT_THROW(modulus(kLine, y, 0.1, 0.0), Error);
}

TEST(Modulus, OracleCapacity) {
  Lineage y = Lineage::constant(Trait(0.0));
  for (int i = 1; i <= 13; ++i) y = y.extended(i * 0.05, Trait(i % 2));
  try {
    modulus_oracle(kLine, y, 0.1, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capacity);
  }
}

TEST(ModulusProperty, MatchesOracleAndWitnessValidates) {
  Stream rng(2024);
  auto finite = gen::random_finite_space(rng, 5);
  for (int i = 0; i < 3000; ++i) {
    const TraitSpace& space = (i % 2) ? finite : kLine;
    auto y = gen::random_lineage(rng, space, 6);
    const double delta = std::array{0.05, 0.1, 0.3, 0.15}[rng.index(4)];
    const double T = rng.bernoulli(0.5) ? 1.0 : 0.2 + rng.uniform();
    const double expect = modulus_oracle(space, y, delta, T);
    const auto got = modulus(space, y, delta, T);
    ASSERT_NEAR(got.value, expect, 1e-12) << "case " << i;
    const auto osc = partition_oscillation(space, step_path(y, T), got.partition, delta);
    ASSERT_TRUE(osc.has_value()) << "case " << i;
    EXPECT_NEAR(*osc, got.value, 1e-12);
  }
}

TEST(ModulusProperty, NondecreasingInDeltaAndHorizon) {
  Stream rng(99);
  for (int i = 0; i < 3000; ++i) {
    auto y = gen::random_lineage(rng, kLine, 10, 1.5);
    double d1 = 0.01 + 0.9 * rng.uniform(), d2 = 0.01 + 0.9 * rng.uniform();
    double t1 = 0.1 + 1.5 * rng.uniform(), t2 = 0.1 + 1.5 * rng.uniform();
    if (d1 > d2) std::swap(d1, d2);
    if (t1 > t2) std::swap(t1, t2);
    const double base = modulus(kLine, y, d1, t1).value;
    EXPECT_LE(base, modulus(kLine, y, d2, t1).value);
    EXPECT_LE(base, modulus(kLine, y, d1, t2).value);
  }
}

TEST(ModulusProperty, SeparatedJumpsAlwaysZero) {
  Stream rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double delta = 0.02 + 0.1 * rng.uniform();
    Lineage y = Lineage::constant(Trait(rng.normal()));
    double t = delta;
    while (true) {
      t += delta * (1.0 + 0.1 + rng.uniform());
      if (t >= 1.0) break;
      y = y.extended(t, Trait(rng.normal()));
    }
    EXPECT_EQ(modulus(kLine, y, delta, 1.0).value, 0.0);
  }
}

TEST(ModulusProperty, FeasibilityAgreesWithValue) {
  Stream rng(31);
  for (int i = 0; i < 1000; ++i) {
    auto y = gen::random_lineage(rng, kLine, 8);
    const double v = modulus(kLine, y, 0.1, 1.0).value;
    EXPECT_TRUE(modulus_at_most(kLine, y, 0.1, 1.0, v));
    if (v > 0) {
      EXPECT_FALSE(modulus_at_most(kLine, y, 0.1, 1.0, std::nextafter(v, 0.0)));
    }
  }
}

TEST(CompactSet, Membership) {
  CompactSetSpec K;
  K.horizon = 1.0;
  K.region = CompactRegion::ball(Trait(0.0), 1.0);
  K.envelope = {{0.1, 0.5}};
  EXPECT_TRUE(in_compact_set(kLine, Lineage::constant(Trait(0.0)), K, 1.0));
  EXPECT_FALSE(in_compact_set(kLine, path({{0, 0}, {0.5, 1.5}}), K, 1.0));
  // Two jumps 0.05 apart: oracle gives w' = 1 at delta 0.1.
  auto y = path({{0, 0}, {0.4, 1}, {0.45, 0}});
  ASSERT_EQ(modulus_oracle(kLine, y, 0.1, 1.0), 1.0);
  EXPECT_FALSE(in_compact_set(kLine, y, K, 1.0));
  K.envelope = {{0.1, 1.0}};
  EXPECT_TRUE(in_compact_set(kLine, y, K, 1.0));
  // Values after the horizon are ignored.
  EXPECT_TRUE(in_compact_set(kLine, path({{0, 0}, {1.5, 9}}), K, 1.0));
}

TEST(CompactSet, AgreesWithOracleRecount) {
  Stream rng(8);
  CompactSetSpec K;
  K.region = CompactRegion::ball(Trait(0.0), 1.25);
  K.envelope = {{0.05, 0.5}, {0.2, 1.0}};
  for (int i = 0; i < 2000; ++i) {
    auto y = gen::random_lineage(rng, kLine, 6);
    bool expect = true;
    for (const auto& r : y.records())
      if (r.time <= 1.0 && std::abs(r.trait[0]) > 1.25) expect = false;
    for (const auto& e : K.envelope)
      if (modulus_oracle(kLine, y, e.delta, 1.0) > e.bound) expect = false;
    EXPECT_EQ(in_compact_set(kLine, y, K, 1.0), expect);
  }
}
