#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace mgw;

TEST(Walk, StepProbabilitiesOnE0) {
  auto k = test::kernel("e0");
  Tree t(k, 1);
  t.make_root(0);
  t.grow_to_level(3);
  const NodeId v = t.child(0, 0);
  Stream rng(2);
  double up = 0;
  const int N = 40000;
  for (int i = 0; i < N; ++i) up += step(t, v, 2.0, rng) == 0;
  EXPECT_NEAR(up / N, 0.5, 0.01);
  // The root of a rooted tree has no parent: uniform among children.
  for (int i = 0; i < 100; ++i) EXPECT_EQ(t.level(step(t, 0, 2.0, rng)), 1);
}

TEST(Walk, ChildlessRootIsAbsorbing) {
  auto k = make_kernel(load_model(R"({"types":["a"],"offspring":{"a":[{"p":0.5,"children":[]},
      {"p":0.5,"children":[{"type":"a"},{"type":"a"},{"type":"a"}]}]}})"),
                       WalkKind::plain);
  for (std::uint64_t s = 0; s < 50; ++s) {
    Tree t(k, s);
    t.make_root(0);
    Stream rng(s);
    auto tr = run_walk(t, 1.5, 10, rng);
    if (t.degree(0) == 0) {
      EXPECT_TRUE(tr.absorbed);
      EXPECT_EQ(tr.steps, 0u);
    }
  }
}

TEST(Walk, RecordsAreConsistent) {
  auto k = test::kernel("e2");
  Tree t(k, 4);
  t.make_root(0);
  t.make_rayed();
  Stream r1(9), r2(9);
  auto full = run_walk(t, 2.0, 500, r1, Record::full);
  Tree t2(k, 4);
  t2.make_root(0);
  t2.make_rayed();
  auto end = run_walk(t2, 2.0, 500, r2, Record::endpoint);
  EXPECT_EQ(full.vertices.size(), 501u);
  EXPECT_EQ(full.last_level, end.last_level);
  for (std::size_t i = 1; i < full.levels.size(); ++i) EXPECT_EQ(std::abs(full.levels[i] - full.levels[i - 1]), 1);
  std::ostringstream os;
  write_trajectory_csv(os, full, true);
  EXPECT_EQ(os.str().substr(0, 15), "t,vertex,height");
}

TEST(Walk, ContinuousTimeJumpRate) {
  // On E0 away from the root the holding rate is λ + 2 = 4.
  auto k = test::kernel("e0");
  Tree t(k, 2);
  t.make_root(0);
  t.make_rayed();
  Stream rng(3);
  auto tr = run_walk_cts(t, 2.0, 20000.0, rng, Record::levels);
  EXPECT_NEAR(static_cast<double>(tr.steps) / 20000.0, 4.0, 0.1);
  EXPECT_EQ(tr.jump_times.size(), tr.levels.size());
}

TEST(Walk, WeightedStepFollowsWeights) {
  // E3 children carry weights 2 and 1/2; at λ = 0 the walk picks them 4:1.
  auto k = test::kernel("e3", WalkKind::rwre);
  Tree t(k, 1);
  t.make_root(0);
  t.grow_to_level(2);
  const NodeId v = t.child(0, 0);
  Stream rng(1);
  double heavy = 0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    const NodeId w = step(t, v, 1e-300, rng);
    heavy += t.weight(w) == 2.0;
  }
  EXPECT_NEAR(heavy / N, 0.8, 0.01);
}

TEST(Excursion, DepthThreshold) {
  EXPECT_EQ(excursion_depth(10), 12);
  EXPECT_EQ(excursion_depth(0), 0);
  EXPECT_EQ(excursion_depth(2), 4);
}

TEST(Excursion, DecompositionEndsAtParent) {
  auto k = test::kernel("e2");
  auto [t, tr] = coupling_reference_walk(k, 5, 20000);
  auto dec = excursion_decompose(tr, t, 2, 0);
  EXPECT_EQ(dec.ell, 4);
  for (const auto& r : dec.records) {
    const NodeId start = tr.vertices[r.tau];
    EXPECT_EQ(tr.vertices[r.eta], t.parent_if_present(start));
    EXPECT_GT(2 * t.depth(start), dec.ell);
    for (std::uint64_t s = r.tau; s < r.eta; ++s) EXPECT_GE(t.depth(tr.vertices[s]), t.depth(start));
  }
}

TEST(Excursion, CouplingXSideMatchesReference) {
  auto k = test::kernel("e2");
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto pair = shifted_coupling(k, 2, 300, 0, s);
    auto [rt, rtr] = coupling_reference_walk(k, s, pair.x.steps);
    EXPECT_EQ(rtr.vertices, pair.x.vertices);
    EXPECT_TRUE(pair.increments_equal);
    EXPECT_EQ(pair.y.steps, 300u);
    for (std::size_t i = 1; i < pair.y.levels.size(); ++i)
      EXPECT_EQ(std::abs(pair.y.levels[i] - pair.y.levels[i - 1]), 1);
  }
}
