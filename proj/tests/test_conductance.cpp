#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace mgw;

TEST(Conductance, BinaryTreeClosedForm) {
  Tree t(test::kernel("e0"), 1);
  t.make_root(0);
  for (int k : {1, 2, 4, 8, 16}) EXPECT_NEAR(effective_conductance(t, k, 2.0), 2.0 / k, 1e-12);
  EXPECT_EQ(t.size(), 1u);  // nothing materialised
}

TEST(Conductance, LazyAndGrownAgree) {
  auto k = test::kernel("e1");
  Tree a(k, 4), b(k, 4);
  a.make_root(0);
  b.make_root(0);
  b.grow_to_level(6);
  EXPECT_DOUBLE_EQ(effective_conductance(a, 6, 1.5), effective_conductance(b, 6, 1.5));
}

TEST(Conductance, PathHasSeriesLaw) {
  auto k = make_kernel(load_model(R"({"types":["a"],"offspring":{"a":[{"p":0.5,"children":[{"type":"a"}]},
      {"p":0.5,"children":[{"type":"a"},{"type":"a"}]}]}})"),
                       WalkKind::plain);
  // λ = 1: every edge has unit conductance, so a single path of length k has C = 1/k.
  Tree t(k, 0);
  t.make_root(0);
  t.grow_to_level(3);
  t.freeze();
  EXPECT_GE(effective_conductance(t, 3, 1.0), 1.0 / 3 - 1e-12);
}

TEST(Conductance, ClassifierE3) {
  auto m = test::model("e3");
  GammaCurve curve(m);
  EXPECT_NEAR(p_lambda(curve, 2.0).first, 1.25, 1e-9);
  EXPECT_NEAR(p_lambda(curve, 3.0).first, 2.5 / 3, 1e-9);
  const double rc = critical_bias(curve);
  EXPECT_NEAR(rc, 2.5, 1e-9);
  EXPECT_NEAR(kappa(curve, rc), 1.0, 1e-8);
  EXPECT_EQ(classify_rwre(m, 2.0).verdict, "transient");
  EXPECT_EQ(classify_rwre(m, 2.5).verdict, "critical-indeterminate");
  EXPECT_EQ(classify_rwre(m, 3.0).verdict, "positive-recurrent");
}

TEST(Conductance, UnitWeightsAtRhoAreCritical) {
  auto r = classify_rwre(test::model("e2"), 2.0);
  EXPECT_EQ(r.verdict, "critical-indeterminate");
  EXPECT_NEAR(r.rho_circ, 2.0, 1e-9);
  EXPECT_NEAR(r.kappa, 1.0, 1e-8);  // ρ̄ ≡ ρ meets (ρ°)^γ at γ = 1
}

TEST(Conductance, MandelbrotExactOnE3) {
  auto k = test::kernel("e3", WalkKind::rwre);
  GammaCurve curve(k->model());
  for (double g : {0.3, 0.7, 1.0}) {
    Tree t(k, 5);
    t.make_root(0);
    auto s = level_conductance_sums(t, g, 8, curve);
    EXPECT_NEAR(s.zfrak, 1.0, 1e-12);
    EXPECT_NEAR(s.sums[8], std::pow(curve.rho(g), 8), 1e-9);
  }
}

TEST(Conductance, DetailedBalance) {
  for (const char* name : {"e2", "e3"}) {
    auto k = test::kernel(name, WalkKind::rwre);
    Tree t(k, 2);
    t.make_root(0);
    t.grow_to_level(4);
    for (NodeId v = 1; v < t.size(); ++v)
      if (t.level(v) < 4) {
        EXPECT_LT(detailed_balance_defect(t, v, 2.3), 1e-12);
      }
  }
}

TEST(Conductance, OccupationIdentityE0) {
  Tree t(test::kernel("e0"), 1);
  t.make_root(0);
  t.grow_to_level(6);
  t.freeze();
  const NodeId v = t.child(t.child(t.child(0, 1), 0), 1);
  Stream rng(4);
  auto r = occupation_check(t, v, 2.0, 100000, rng);
  EXPECT_NEAR(r.expected, 0.25, 1e-15);  // (2+2)/(2·2³)
  EXPECT_TRUE(r.pass) << r.to_json().dump();
}

TEST(Conductance, ResistanceGrowthSmall) {
  auto r = resistance_growth_check(test::kernel("e1"), {2, 4, 8, 16}, 100, 1);
  EXPECT_EQ(r.median_kC.size(), 4u);
  for (double x : r.median_kC) EXPECT_GT(x, 0);
}
