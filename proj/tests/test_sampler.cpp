#include "test_util.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace mgw;

TEST(Sampler, RootLawOfImgwrE2) {
  auto k = test::kernel("e2");
  std::map<int, double> deg;
  double total = 0;
  for (const auto& [d, p] : k->root_law(true)) {
    deg[static_cast<int>(k->model().offspring[d.type][d.atom].children.size())] += p;
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-14);
  EXPECT_NEAR(deg[2], 2.0 / 3, 1e-12);
  EXPECT_NEAR(deg[1], 1.0 / 8, 1e-12);
  EXPECT_NEAR(deg[3], 5.0 / 24, 1e-12);
}

TEST(Sampler, ImgwrDegreeFrequencies) {
  auto k = test::kernel("e2");
  std::vector<double> counts(3, 0);  // degree 1, 2, 3
  const std::size_t N = 20000;
  for (std::size_t i = 0; i < N; ++i) {
    Stream rng = Stream::for_replica(5, i);
    Tree t = sample_imgwr(k, MeasureSpec{Measure::imgwr}, rng);
    ASSERT_TRUE(t.rayed());
    counts[t.degree(t.root()) - 1] += 1;
  }
  auto r = chi_square_gof(counts, {1.0 / 8, 2.0 / 3, 5.0 / 24});
  EXPECT_TRUE(r.pass) << r.to_json().dump();
}

TEST(Sampler, NonextinctTreesSurvive) {
  auto k = test::kernel("e1");
  for (std::size_t i = 0; i < 200; ++i) {
    Stream rng = Stream::for_replica(3, i);
    Tree t = sample_mgw_nonextinct(k, MeasureSpec{Measure::mgw_nonextinct, RootPolicy::canonical, 0, 8}, rng);
    EXPECT_GT(level_census(t, 8).total(), 0u);
  }
}

TEST(Sampler, KernelRejectsCriticalModel) {
  EXPECT_THROW(make_kernel(load_model(R"({"types":["a"],"offspring":{"a":[{"p":1,"children":[{"type":"a"}]}]}})"),
                           WalkKind::plain),
               ModelError);
}

TEST(Sampler, MgwSurvivalFrequencyE1) {
  // P(extinction by generation 12) is close to 𝔵 = 1/3.
  auto k = test::kernel("e1");
  double dead = 0;
  const std::size_t N = 6000;
  for (std::size_t i = 0; i < N; ++i) {
    Stream rng = Stream::for_replica(4, i);
    Tree t = sample_mgw(k, MeasureSpec{Measure::mgw, RootPolicy::fixed, 0, 12}, rng);
    dead += level_census(t, 12).total() == 0;
  }
  EXPECT_NEAR(dead / N, 1.0 / 3, 0.02);
}

TEST(Sampler, QnStarSpineUsesInflatedLaw) {
  // On E2 the spine vertex of type b takes the three-child atom with q̂ = 3/4.
  auto k = test::kernel("e2");
  double b_total = 0, b_three = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    Stream rng = Stream::for_replica(8, i);
    auto s = sample_qnstar(k, MeasureSpec{Measure::qnstar, RootPolicy::fixed, 1, 0, 0, 1}, rng);
    ASSERT_EQ(s.marked.size(), 2u);
    b_total += 1;
    b_three += s.tree.degree(s.tree.root()) == 3;
    EXPECT_EQ(s.tree.parent_if_present(s.marked[1]), s.marked[0]);
  }
  EXPECT_NEAR(b_three / b_total, 0.75, 0.015);
}

TEST(Sampler, BallSignatureIgnoresChildOrder) {
  auto k = test::kernel("e0");
  Tree t(k, 1);
  t.make_root(0);
  t.make_rayed();
  EXPECT_EQ(ball_signature(t, t.root(), 2), ball_signature(t, t.root(), 2));
  // Going up one step uses up the radius: v_1 contributes its type only.
  EXPECT_EQ(ball_signature(t, t.root(), 1), "[0(0,0,)][0]");
}

TEST(Sampler, WeakLimitSmall) {
  auto r = weak_limit_check(test::kernel("e2"), 6, 1, 3000, 17);
  EXPECT_TRUE(r.pass) << r.to_json().dump();
}
