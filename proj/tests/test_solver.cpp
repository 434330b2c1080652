#include <gtest/gtest.h>

#include "support.hpp"

using namespace nnepps;
using namespace nnepps::testing;

namespace {

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<double> fixture(const std::string& name) {
  return parse_csv_values(read_text(std::filesystem::path(NNEPPS_FIXTURES) / name));
}

}  // namespace

TEST(CheckFeasible, Examples) {
  EXPECT_EQ(check_feasible(Volume({3}, {2, -1, 2})), Feasibility::feasible);
  EXPECT_EQ(check_feasible(Volume({2}, {-1, 0.5})), Feasibility::infeasible);
  EXPECT_EQ(check_feasible(Volume({2}, {1, -1})), Feasibility::feasible);
}

TEST(Solve, NoNegativesIsIdentity) {
  Volume x({3}, {5, 1, 3});
  const auto r = solve(x, make_preset("1d-2"));
  EXPECT_EQ(r.y, x);
  for (double a : r.alpha.data) EXPECT_EQ(a, 0.0);
  EXPECT_EQ(r.report.outer_iterations, 1u);
  EXPECT_TRUE(r.report.converged);
}

TEST(Solve, SingleInteriorNegative) {
  const auto r = solve(Volume({3}, {2, -1, 2}), make_preset("1d-2"));
  EXPECT_EQ(vec(r.y.data()), (std::vector<double>{1.5, 0, 1.5}));
  EXPECT_EQ(r.alpha.data, (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(r.report.objective_l1, 1.0);
}

TEST(Solve, ZeroMeanPairCollapses) {
  const auto r = solve(Volume({2}, {1, -1}), make_preset("1d-2"));
  ASSERT_TRUE(r.report.converged);
  for (double v : r.y.data()) EXPECT_LE(std::abs(v), 1e-9);
}

TEST(Solve, NegativeMeanIsInfeasible) {
  EXPECT_THROW(solve(Volume({2}, {-1, 0.5}), make_preset("1d-2")), InfeasibleError);
}

TEST(Solve, TwoPassFixtureNeedsTwoOuterIterations) {
  Volume x({4, 4}, fixture("two_pass_input.csv"));
  SolverConfig cfg;
  cfg.sweep_order = SweepOrder::lexicographic();
  std::vector<std::vector<double>> after_outer;
  SolverHooks hooks;
  hooks.on_outer_done = [&](std::size_t, std::span<const double> y) { after_outer.push_back(vec(y)); };
  const auto r = solve(x, make_preset("2d-4"), cfg, hooks);
  ASSERT_TRUE(r.report.converged);
  EXPECT_EQ(r.report.outer_iterations, 2u);
  ASSERT_GE(after_outer.size(), 1u);
  // Pixel 10 starts non-negative and is pushed below zero by the first outer iteration.
  EXPECT_GE(x[10], 0.0);
  EXPECT_LT(after_outer[0][10], -r.report.neg_tolerance);

  const auto y_ref = fixture("two_pass_oracle_y.csv");
  const auto a_ref = fixture("two_pass_oracle_alpha.csv");
  const double scale = max_abs(x.data());
  EXPECT_LE(max_abs_diff(r.y.data(), y_ref), 1e-7 * scale);
  EXPECT_LE(max_abs_diff(r.alpha.data, a_ref), 1e-7 * scale);
}

TEST(Solve, TwoPassFixtureCapReturnsPartialResult) {
  Volume x({4, 4}, fixture("two_pass_input.csv"));
  SolverConfig cfg;
  cfg.max_outer_iterations = 1;
  const auto r = solve(x, make_preset("2d-4"), cfg);
  EXPECT_FALSE(r.report.converged);
  EXPECT_EQ(r.report.stop_reason, "outer iteration cap reached");
  EXPECT_LT(r.report.min_final_value, 0.0);
  EXPECT_LT(min_value(r.y.data()), 0.0);  // no clamp on a non-converged run
}

TEST(Solve, InnerCapReportsNonConvergence) {
  Rng rng(1);
  const auto x = random_feasible_image(rng, {24, 24}, 0.5, 0.6);
  SolverConfig cfg;
  cfg.max_inner_sweeps = 1;
  const auto r = solve(x, make_preset("2d-8"), cfg);
  EXPECT_FALSE(r.report.converged);
  EXPECT_EQ(r.report.stop_reason, "inner sweep cap reached");
}

TEST(Solve, RejectPolicy) {
  // Interior-only transfer: fine under reject.
  const auto ok = solve(Volume({5}, {2, 2, -1, 2, 2}), make_preset("1d-2"), SolverConfig{.boundary = BoundaryPolicy::reject});
  EXPECT_EQ(ok.y[2], 0.0);
  // A negative edge voxel needs a boundary transfer.
  EXPECT_THROW(solve(Volume({4}, {-1, 2, 2, 2}), make_preset("1d-2"), SolverConfig{.boundary = BoundaryPolicy::reject}),
               BoundaryError);
}

TEST(Solve, ConfigValidation) {
  const auto m = make_preset("1d-2");
  const Volume x({2}, {1, 1});
  EXPECT_THROW(solve(x, m, SolverConfig{.neg_tolerance = -1.0}), ValidationError);
  EXPECT_THROW(solve(x, m, SolverConfig{.inner_accuracy = 0.0}), ValidationError);
  EXPECT_THROW(solve(x, m, SolverConfig{.threads = 0}), ValidationError);
  EXPECT_THROW(solve(x, SpreadMask{{{{0, 0, 0}, 1.0}, {{0, 0, 1}, -1.0}}}), ValidationError);
}

// Properties over random instances: non-negativity, complementarity, mean
// preservation, monotone alpha.
TEST(SolveProperties, RandomInstances) {
  Rng rng(101);
  for (int trial = 0; trial < 150; ++trial) {
    const int dim = 1 + trial % 3;
    const auto m = random_mask(rng, dim);
    const auto x = random_feasible_image(rng, random_dims(rng, dim));
    std::vector<double> last;
    bool monotone = true;
    SolverHooks hooks;
    hooks.on_sweep = [&](std::span<const double> a) {
      for (Index i = 0; i < last.size(); ++i)
        if (a[i] < last[i]) monotone = false;
      last = vec(a);
    };
    const auto r = solve(x, m, {}, hooks);
    ASSERT_TRUE(r.report.converged);
    EXPECT_TRUE(monotone);
    EXPECT_GE(min_value(r.y.data()), 0.0);
    EXPECT_GE(r.report.min_final_value, -r.report.neg_tolerance);
    for (Index i = 0; i < x.size(); ++i) {
      EXPECT_GE(r.alpha.data[i], 0.0);
      if (r.alpha.data[i] > 0) {
        EXPECT_LE(r.y[i], r.report.neg_tolerance);
      }
    }
    EXPECT_LE(complementarity_defect(r.alpha.data, r.y.data()), r.report.neg_tolerance);
    EXPECT_LE(relative_mean_change(x, r), 1e-8);
    // y is x + H alpha.
    const auto h = apply(m, r.alpha, BoundaryPolicy::renormalize);
    for (Index i = 0; i < x.size(); ++i) EXPECT_NEAR(r.y[i], std::max(0.0, x[i] + h[i]), 1e-9 * max_abs(x.data()));
  }
}

TEST(SolveProperties, ZeroMeanImagesCollapse) {
  Rng rng(55);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = 1 + trial % 3;
    const auto x = random_zero_mean_image(rng, random_dims(rng, dim));
    ASSERT_EQ(sum(x), 0.0);
    const auto r = solve(x, random_mask(rng, dim));
    ASSERT_TRUE(r.report.converged);
    EXPECT_LE(max_abs(r.y.data()), 1e-9 * max_abs(x.data()));
  }
}

TEST(SolveProperties, InfeasibleImagesRejected) {
  Rng rng(56);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = 1 + trial % 3;
    const auto x = random_infeasible_image(rng, random_dims(rng, dim));
    EXPECT_EQ(check_feasible(x), Feasibility::infeasible);
    EXPECT_THROW(solve(x, random_mask(rng, dim)), InfeasibleError);
  }
}

TEST(Deterministic, NonNegativeInputHasZeroDeviation) {
  Rng rng(7);
  std::vector<double> v(25);
  for (auto& e : v) e = uniform(rng, 0, 5);
  const std::vector<SweepOrder> orders{SweepOrder::lexicographic(), SweepOrder::reverse(), random_order(rng, 25)};
  EXPECT_EQ(solve_deterministic_check(Volume({5, 5}, v), make_preset("2d-8"), {}, orders), 0.0);
}

TEST(Deterministic, PermutationsAgree) {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = 1 + trial % 3;
    const auto dims = dim == 2 ? std::vector<Index>{5, 5} : random_dims(rng, dim);
    const auto x = random_feasible_image(rng, dims);
    std::vector<SweepOrder> orders{SweepOrder::lexicographic(), SweepOrder::reverse(), SweepOrder::color_major()};
    for (int k = 0; k < 2; ++k) orders.push_back(random_order(rng, x.size()));
    EXPECT_LE(solve_deterministic_check(x, random_mask(rng, dim), {}, orders), 1e-7 * max_abs(x.data()));
  }
}

TEST(Deterministic, BadPermutationRejected) {
  const Volume x({3}, {2, -1, 2});
  EXPECT_THROW(solve(x, make_preset("1d-2"), SolverConfig{.sweep_order = SweepOrder::custom({0, 0, 1})}), ValidationError);
  EXPECT_THROW(solve(x, make_preset("1d-2"), SolverConfig{.sweep_order = SweepOrder::custom({0, 1})}), ValidationError);
}

// The colored parallel mode is bit-identical to the serial color-major sweep.
TEST(Parallel, MatchesSerialColorMajorBitwise) {
  Rng rng(303);
  for (int trial = 0; trial < 12; ++trial) {
    const int dim = 1 + trial % 3;
    const std::vector<Index> dims = dim == 1 ? std::vector<Index>{500} : dim == 2 ? std::vector<Index>{40, 30} : std::vector<Index>{12, 10, 9};
    const auto m = random_mask(rng, dim);
    const auto x = random_feasible_image(rng, dims, 0.3, 0.5);
    for (auto inner : {InnerSolver::sweep, InnerSolver::conjugate_gradient}) {
      SolverConfig serial{.sweep_order = SweepOrder::color_major(), .inner_solver = inner};
      SolverConfig par = serial;
      par.threads = 3;
      const auto a = solve(x, m, serial);
      const auto b = solve(x, m, par);
      EXPECT_EQ(a.y, b.y);
      EXPECT_EQ(a.alpha.data, b.alpha.data);
      EXPECT_EQ(a.report.outer_iterations, b.report.outer_iterations);
    }
  }
}

TEST(InnerSolvers, SweepAndCgAgree) {
  Rng rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = 1 + trial % 3;
    const std::vector<Index> dims = dim == 1 ? std::vector<Index>{300} : dim == 2 ? std::vector<Index>{20, 20} : std::vector<Index>{8, 8, 8};
    const auto m = random_mask(rng, dim);
    const auto x = random_feasible_image(rng, dims, 0.2, 0.6);
    const auto a = solve(x, m, SolverConfig{.inner_solver = InnerSolver::sweep});
    const auto b = solve(x, m, SolverConfig{.inner_solver = InnerSolver::conjugate_gradient});
    ASSERT_TRUE(a.report.converged);
    ASSERT_TRUE(b.report.converged);
    EXPECT_LE(max_abs_diff(a.y.data(), b.y.data()), 1e-7 * max_abs(x.data()));
    EXPECT_LE(complementarity_defect(b.alpha.data, b.y.data()), b.report.neg_tolerance);
  }
}

TEST(InnerSolvers, Parse) {
  EXPECT_EQ(parse_inner_solver("cg"), InnerSolver::conjugate_gradient);
  EXPECT_EQ(parse_inner_solver("sweep"), InnerSolver::sweep);
  EXPECT_THROW(parse_inner_solver("jacobi"), ValidationError);
}
