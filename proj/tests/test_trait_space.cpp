#include <gtest/gtest.h>

#include "generators.hpp"
#include "histflow/trait_space.hpp"

using namespace histflow;

TEST(TraitSpace, EuclideanDistances) {
  auto e1 = TraitSpace::euclidean(1);
  EXPECT_EQ(e1.distance(Trait(0.0), Trait(0.0)), 0.0);
  auto e2 = TraitSpace::euclidean(2);
  EXPECT_EQ(e2.distance(Trait{0.0, 0.0}, Trait{3.0, 4.0}), 5.0);
}

TEST(TraitSpace, FiniteTableLookup) {
  auto s = TraitSpace::finite({"A", "B"}, {0, 2, 2, 0});
  EXPECT_EQ(s.distance(Trait::label(s.label_index("A")), Trait::label(s.label_index("B"))), 2.0);
}

TEST(TraitSpace, DimensionAndLabelMismatchRejected) {
  auto e2 = TraitSpace::euclidean(2);
  try {
    e2.distance(Trait(1.0), Trait{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_point);
  }
  auto f = TraitSpace::finite({"A", "B"}, {0, 1, 1, 0});
  EXPECT_THROW(f.distance(Trait::label(0), Trait::label(2)), Error);
  EXPECT_THROW(f.label_index("C"), Error);
  auto iv = TraitSpace::interval(0, 1);
  EXPECT_THROW(iv.distance(Trait(0.5), Trait(1.5)), Error);
}

TEST(TraitSpace, NonMetricTablesRejected) {
  EXPECT_THROW(TraitSpace::finite({"A", "B"}, {0, 1, 2, 0}), Error);
  EXPECT_THROW(TraitSpace::finite({"A", "B"}, {0, 0, 0, 0}), Error);
  EXPECT_THROW(TraitSpace::finite({"A", "B", "C"}, {0, 1, 5, 1, 0, 1, 5, 1, 0}), Error);
  EXPECT_THROW(TraitSpace::finite({"A", "B"}, {0, -1, -1, 0}), Error);
  EXPECT_NO_THROW(TraitSpace::finite({"A", "B", "C"}, {0, 1, 2, 1, 0, 1, 2, 1, 0}));
}

TEST(TraitSpace, MetricAxiomsOnSampledTriples) {
  Stream rng(17);
  for (std::size_t dim : {1u, 2u, 3u}) {
    auto s = TraitSpace::euclidean(dim);
    for (int i = 0; i < 2000; ++i) {
      auto pt = [&] {
        std::vector<double> c(dim);
        for (auto& v : c) v = rng.normal() * 3.0;
        return Trait(std::span<const double>(c));
      };
      auto a = pt(), b = pt(), c = pt();
      const double ab = s.distance(a, b), bc = s.distance(b, c), ac = s.distance(a, c);
      EXPECT_GE(ab, 0.0);
      EXPECT_EQ(ab, s.distance(b, a));
      EXPECT_LE(ac, ab + bc + 1e-12);
      EXPECT_EQ(s.distance(a, a), 0.0);
    }
  }
}

TEST(TraitSpace, GeneratedFiniteSpacesAreMetrics) {
  Stream rng(3);
  for (int i = 0; i < 50; ++i) {
    auto s = gen::random_finite_space(rng, 2 + rng.index(6));
    EXPECT_TRUE(s.metric_violation().empty());
  }
}

TEST(CompactRegion, ClosedBall) {
  auto s = TraitSpace::euclidean(1);
  auto ball = CompactRegion::ball(Trait(0.0), 1.0);
  EXPECT_TRUE(region_contains(s, ball, Trait(1.0)));
  EXPECT_FALSE(region_contains(s, ball, Trait(1.0001)));
}

TEST(CompactRegion, AllPointsOnlyOnFiniteSpaces) {
  auto f = TraitSpace::finite({"A", "B", "C"}, {0, 1, 2, 1, 0, 1, 2, 1, 0});
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_TRUE(region_contains(f, CompactRegion::all_points(), Trait::label(i)));
  EXPECT_THROW(region_contains(TraitSpace::euclidean(1), CompactRegion::all_points(), Trait(0.0)),
               Error);
}

TEST(CompactRegion, BoxMembership) {
  auto s = TraitSpace::euclidean(2);
  auto box = CompactRegion::box({0, 0}, {1, 2});
  EXPECT_TRUE(region_contains(s, box, Trait{1.0, 2.0}));
  EXPECT_FALSE(region_contains(s, box, Trait{1.0, 2.5}));
  EXPECT_THROW(region_contains(TraitSpace::euclidean(3), box, Trait{0.0, 0.0, 0.0}), Error);
}

TEST(CompactRegion, BallMonotoneInRadius) {
  Stream rng(5);
  auto s = TraitSpace::euclidean(2);
  for (int i = 0; i < 5000; ++i) {
    Trait c{rng.normal(), rng.normal()};
    Trait x{rng.normal() * 2, rng.normal() * 2};
    double r1 = rng.uniform() * 3, r2 = rng.uniform() * 3;
    if (r1 > r2) std::swap(r1, r2);
    if (region_contains(s, CompactRegion::ball(c, r1), x)) {
      EXPECT_TRUE(region_contains(s, CompactRegion::ball(c, r2), x));
    }
  }
}
