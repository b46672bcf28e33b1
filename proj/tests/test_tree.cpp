#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace mgw;

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Stream a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
  EXPECT_NE(derive_key(1, 2), derive_key(2, 1));
  Stream u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    EXPECT_LT(u.below(5), 5u);
  }
}

TEST(Tree, E0BinaryLevels) {
  Tree t(test::kernel("e0"), 3);
  t.make_root(0);
  t.grow_to_level(5);
  EXPECT_EQ(t.size(), 63u);
  auto c = level_census(t, 5);
  EXPECT_EQ(c.total(), 32u);
  EXPECT_DOUBLE_EQ(c.zfrak, 1.0);
}

TEST(Tree, GrowTwiceThrowsAndUnknownNodeThrows) {
  Tree t(test::kernel("e0"), 3);
  t.make_root(0);
  t.grow(0);
  EXPECT_THROW(t.grow(0), TreeError);
  EXPECT_THROW(t.grow(99), TreeError);
  EXPECT_THROW(t.make_root(0), TreeError);
}

TEST(Tree, LazyGrowthIsOrderIndependent) {
  auto k = test::kernel("e2");
  Tree a(k, 11), b(k, 11);
  a.make_root(0);
  b.make_root(0);
  a.grow_to_level(6);
  // Grow b along one path first, then everything.
  NodeId v = 0;
  for (int i = 0; i < 5; ++i) {
    b.ensure_grown(v);
    if (b.degree(v) == 0) break;
    v = b.child(v, b.degree(v) - 1);
  }
  b.grow_to_level(6);
  EXPECT_EQ(level_census(a, 6).counts, level_census(b, 6).counts);
  std::ostringstream sa, sb;
  a.dump_jsonl(sa);
  EXPECT_NE(sa.str().find("\"type\":\"a\""), std::string::npos);
}

TEST(Tree, FrozenTreeDoesNotGrow) {
  Tree t(test::kernel("e0"), 3);
  t.make_root(0);
  t.grow_to_level(2);
  t.freeze();
  const auto n = t.size();
  t.ensure_grown(t.child(t.child(0, 0), 0));
  EXPECT_EQ(t.size(), n);
}

TEST(Tree, RayHeightsAndDistances) {
  auto k = test::kernel("e2");
  Tree t(k, 5);
  t.make_root(1);
  t.make_rayed();
  t.grow_to_level(1);
  const NodeId v3 = t.ray_vertex(3);
  EXPECT_EQ(t.height(v3), -3);
  EXPECT_EQ(t.height(t.root()), 0);
  EXPECT_EQ(t.distance_to_root(v3), 3);
  // The ray child of v_i is listed last and is v_{i−1}.
  EXPECT_EQ(t.child(v3, t.degree(v3) - 1), t.ray_vertex(2));
  EXPECT_EQ(t.parent(t.ray_vertex(2)), v3);
  // An off-ray child of v_3 sits at height −2 and distance 4 from o.
  if (t.degree(v3) > 1) {
    const NodeId w = t.child(v3, 0);
    EXPECT_EQ(t.height(w), -2);
    EXPECT_EQ(t.distance_to_root(w), 4);
    EXPECT_EQ(t.spine_distance(w), 1);
  }
  Tree rooted(k, 5);
  rooted.make_root(0);
  EXPECT_THROW(rooted.height(0), TreeError);
}

TEST(Tree, RayIsReproducibleFromSeed) {
  auto k = test::kernel("e2");
  Tree a(k, 77), b(k, 77);
  for (Tree* t : {&a, &b}) {
    t->make_root(0);
    t->make_rayed();
  }
  a.ray_vertex(20);
  for (std::size_t i = 0; i <= 20; ++i) {
    EXPECT_EQ(a.type(a.ray_vertex(i)), b.type(b.ray_vertex(i)));
    EXPECT_EQ(a.degree(a.ray_vertex(i)), b.degree(b.ray_vertex(i)));
  }
}

TEST(Tree, ReversedChainFrequencies) {
  // Types along the ray form a stationary chain with law π = (2/3, 1/3) on E2;
  // a 'b' is always preceded (above) by an 'a'.
  auto k = test::kernel("e2");
  Tree t(k, 9);
  t.make_root(0);
  t.make_rayed();
  double a_count = 0;
  const std::size_t n = 20000;
  for (std::size_t i = 1; i <= n; ++i) {
    a_count += t.type(t.ray_vertex(i)) == 0;
    if (t.type(t.ray_vertex(i - 1)) == 1) {
      EXPECT_EQ(t.type(t.ray_vertex(i)), 0);
    }
  }
  EXPECT_NEAR(a_count / n, 2.0 / 3, 0.02);
}

TEST(Tree, MeanGrowthMatchesRho) {
  auto k = test::kernel("e2");
  double total = 0;
  const int N = 2000;
  for (int i = 0; i < N; ++i) {
    Tree t(k, static_cast<std::uint64_t>(i));
    t.make_root(0);
    t.grow_to_level(4);
    total += level_census(t, 4).zfrak;
  }
  // E^a 𝔷_n = r_a = 1/2.
  EXPECT_NEAR(total / N, 0.5, 0.03);
}
