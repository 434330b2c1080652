#include <gtest/gtest.h>

#include "support.hpp"

using namespace nnepps;
using namespace nnepps::testing;

TEST(Oracle, SingleInteriorNegative) {
  const Volume x({3}, {2, -1, 2});
  for (auto norm : {Norm::l1, Norm::l2}) {
    const auto s = oracle_solve(make_dense_lp(x, make_preset("1d-2"), BoundaryPolicy::renormalize, norm));
    EXPECT_LE(max_abs_diff(s.alpha, std::vector<double>{0, 1, 0}), 1e-12);
    EXPECT_LE(max_abs_diff(s.y, std::vector<double>{1.5, 0, 1.5}), 1e-12);
    EXPECT_NEAR(s.objective, 1.0, 1e-12);
  }
  EXPECT_LE(norm_equivalence_check(x, make_preset("1d-2")), 1e-9);
}

TEST(Oracle, NonNegativeInputNeedsNoTransfer) {
  const Volume x({2, 3}, {1, 0, 4, 2, 2, 0.5});
  for (auto norm : {Norm::l1, Norm::l2}) {
    const auto s = oracle_solve(make_dense_lp(x, make_preset("2d-8"), BoundaryPolicy::renormalize, norm));
    EXPECT_EQ(s.objective, 0.0);
    for (double a : s.alpha) EXPECT_EQ(a, 0.0);
  }
  EXPECT_EQ(norm_equivalence_check(x, make_preset("2d-8")), 0.0);
}

TEST(Oracle, InfeasibleInput) {
  const Volume x({3}, {-2, 1, -1});
  EXPECT_THROW(oracle_solve(make_dense_lp(x, make_preset("1d-2"), BoundaryPolicy::renormalize, Norm::l1)), InfeasibleError);
  EXPECT_THROW(enumerate_active_sets(assemble_dense(make_preset("1d-2"), x.dims(), BoundaryPolicy::renormalize),
                                     {x.data().begin(), x.data().end()}),
               InfeasibleError);
}

TEST(Oracle, ValidatesColumns) {
  DenseLP lp{Norm::l1, {2, 2, {1, 0, -1, 1}}, {1, 1}};
  EXPECT_THROW(lp.validate(), ValidationError);
}

TEST(Oracle, RandomTwoByThreeMatchesEnumeration) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<Index> dims{2, 3};
    const auto m = trial % 3 == 0 ? make_preset("2d-8") : random_mask(rng, 2);
    const auto x = random_feasible_image(rng, dims);
    const std::vector<double> xv(x.data().begin(), x.data().end());
    const auto lp = make_dense_lp(x, m, BoundaryPolicy::renormalize, Norm::l1);
    const auto s = oracle_solve(lp);
    const auto e = enumerate_active_sets(lp.h, xv);
    const double scale = max_abs(xv);
    EXPECT_NEAR(s.objective, e.objective, 1e-9 * scale);
    EXPECT_LE(max_abs_diff(s.y, e.y), 1e-9 * scale);
    EXPECT_GE(*std::min_element(s.y.begin(), s.y.end()), -1e-9 * scale);
  }
}

TEST(Oracle, EnumerationCap) {
  const Volume x({13}, std::vector<double>(13, 1.0));
  EXPECT_THROW(enumerate_active_sets(assemble_dense(make_preset("1d-2"), x.dims(), BoundaryPolicy::renormalize),
                                     {x.data().begin(), x.data().end()}),
               SizeLimitError);
}

TEST(NormEquivalence, RandomEightVoxelLines) {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_feasible_image(rng, {8});
    EXPECT_LE(norm_equivalence_check(x, random_mask(rng, 1)), 1e-7 * max_abs(x.data()));
  }
}

TEST(NormEquivalence, L2FromPerturbedStartReachesL1Image) {
  Rng rng(33);
  int moved = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int dim = 1 + trial % 3;
    const auto x = random_feasible_image(rng, random_dims(rng, dim));
    const auto lp = make_dense_lp(x, random_mask(rng, dim), BoundaryPolicy::renormalize, Norm::l1);
    const auto l1 = oracle_solve(lp);
    const auto start = perturbed_feasible_start(rng, lp.h, lp.x, l1.alpha);
    const auto y_start = oracle_detail::image_of(lp.h, lp.x, start);
    ASSERT_GE(*std::min_element(y_start.begin(), y_start.end()), -1e-12 * max_abs(x.data()));
    if (max_abs_diff(start, l1.alpha) > 1e-6 * max_abs(x.data())) ++moved;
    const double scale = oracle_detail::scale_of(lp.x);
    std::vector<double> xs(lp.x), ss(start);
    for (auto& v : xs) v /= scale;
    for (auto& v : ss) v /= scale;
    auto alpha = oracle_detail::active_set_qp(lp.h, xs, ss);
    for (auto& v : alpha) v *= scale;
    EXPECT_LE(max_abs_diff(oracle_detail::image_of(lp.h, lp.x, alpha), l1.y), 1e-7 * max_abs(x.data()));
  }
  EXPECT_GE(moved, 40);  // most starts are genuinely off the optimum
}

TEST(NormEquivalence, SizeCap) {
  const Volume x({257}, std::vector<double>(257, 1.0));
  EXPECT_THROW(norm_equivalence_check(x, make_preset("1d-2")), SizeLimitError);
}

TEST(Norm, Parse) {
  EXPECT_EQ(parse_norm("l1"), Norm::l1);
  EXPECT_EQ(parse_norm("L2"), Norm::l2);
  EXPECT_THROW(parse_norm("linf"), ValidationError);
}
