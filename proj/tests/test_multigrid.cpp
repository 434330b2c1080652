#include <gtest/gtest.h>

#include "support.hpp"

using namespace nnepps;
using namespace nnepps::detail;
using namespace nnepps::testing;

namespace {

// 6-neighbor Laplacian-like system on a random subset of an n^3 grid, with
// a diagonal that exceeds the off-diagonal row sum by `shift` everywhere.
struct Problem {
  SymmetricCsr m;
  std::vector<GridPoint> points;
};

Problem random_problem(Rng& rng, std::uint32_t n, double keep, double shift) {
  Problem p;
  std::vector<std::uint32_t> id(n * n * n, UINT32_MAX);
  for (std::uint32_t z = 0; z < n; ++z)
    for (std::uint32_t y = 0; y < n; ++y)
      for (std::uint32_t x = 0; x < n; ++x)
        if (uniform(rng, 0, 1) < keep) {
          id[(z * n + y) * n + x] = static_cast<std::uint32_t>(p.points.size());
          p.points.push_back({z, y, x});
        }
  for (const auto& pt : p.points) {
    double off = 0.0;
    for (int axis = 0; axis < 3; ++axis)
      for (int step : {-1, 1}) {
        auto q = pt;
        q[axis] += step;
        if (q[axis] >= n) continue;  // also catches wrap-around below zero
        const auto j = id[(q[0] * n + q[1]) * n + q[2]];
        if (j == UINT32_MAX) continue;
        p.m.col.push_back(j);
        p.m.val.push_back(-1.0);
        off += 1.0;
      }
    p.m.diag.push_back(off + shift);
    p.m.row.push_back(p.m.col.size());
  }
  return p;
}

double residual(const SymmetricCsr& m, const std::vector<double>& b, const std::vector<double>& x) {
  std::vector<double> q(b.size());
  m.multiply(x, q);
  double worst = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) worst = std::max(worst, std::abs(b[k] - q[k]));
  return worst;
}

}  // namespace

TEST(Multigrid, AgreesWithJacobiAndNeedsFewerIterations) {
  Rng rng(3);
  auto p = random_problem(rng, 28, 0.9, 1e-3);
  std::vector<double> b(p.m.size());
  for (auto& e : b) e = uniform(rng, 0, 1);
  AggregationMultigrid mg(p.m, p.points);
  ASSERT_TRUE(mg.ok());
  EXPECT_GE(mg.levels(), 3u);

  std::vector<double> xm(b.size(), 0.0), xj(b.size(), 0.0);
  std::size_t im = 0, ij = 0;
  ASSERT_TRUE(pcg(p.m, b, xm, 1e-9, 1000, im, [&](const auto& r, auto& z) { mg.apply(r, z); }));
  ASSERT_TRUE(pcg(p.m, b, xj, 1e-9, 100000, ij, [&](const auto& r, auto& z) { jacobi(p.m, r, z); }));
  EXPECT_LE(residual(p.m, b, xm), 1e-9);
  EXPECT_LT(im * 3, ij);
  // ||x_m - x_j|| <= ||A^-1|| (r_m + r_j) with ||A^-1|| <= 1/shift.
  EXPECT_LE(max_abs_diff(xm, xj), 2e-9 / 1e-3);
}

TEST(Multigrid, PreconditionerIsSymmetric) {
  Rng rng(5);
  auto p = random_problem(rng, 20, 0.8, 0.1);
  AggregationMultigrid mg(p.m, p.points);
  ASSERT_TRUE(mg.ok());
  const std::size_t n = p.m.size();
  std::vector<double> u(n), v(n), bu(n), bv(n);
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t k = 0; k < n; ++k) {
      u[k] = uniform(rng, -1, 1);
      v[k] = uniform(rng, -1, 1);
    }
    mg.apply(u, bu);
    mg.apply(v, bv);
    double vbu = 0, ubv = 0, ubu = 0;
    for (std::size_t k = 0; k < n; ++k) {
      vbu += v[k] * bu[k];
      ubv += u[k] * bv[k];
      ubu += u[k] * bu[k];
    }
    EXPECT_NEAR(vbu, ubv, 1e-10 * std::abs(ubu));
    EXPECT_GT(ubu, 0.0);
  }
}

TEST(Multigrid, SmallSystemIsSolvedDirectly) {
  Rng rng(7);
  auto p = random_problem(rng, 8, 1.0, 0.5);
  AggregationMultigrid mg(p.m, p.points);
  ASSERT_TRUE(mg.ok());
  EXPECT_EQ(mg.levels(), 1u);
  std::vector<double> b(p.m.size(), 1.0), x;
  mg.apply(b, x);
  EXPECT_LE(residual(p.m, b, x), 1e-12);
}

TEST(Multigrid, InconsistentSingularSystemIsNotReportedSolved) {
  Rng rng(9);
  auto p = random_problem(rng, 16, 1.0, 0.0);  // zero row sums: constant null vector
  std::vector<double> b(p.m.size(), 1.0), x(p.m.size(), 0.0);
  std::size_t it = 0;
  AggregationMultigrid mg(p.m, p.points);
  if (mg.ok()) {
    EXPECT_FALSE(pcg(p.m, b, x, 1e-9, 2000, it, [&](const auto& r, auto& z) { mg.apply(r, z); }));
  }
  std::fill(x.begin(), x.end(), 0.0);
  EXPECT_FALSE(pcg(p.m, b, x, 1e-9, 2000, it, [&](const auto& r, auto& z) { jacobi(p.m, r, z); }));
}

TEST(Multigrid, CgSolverOnLargeComponentMatchesSweeps) {
  // Dense negatives over a 24^3 grid give an active component well above
  // the size where the solver switches to the multigrid preconditioner.
  Rng rng(11);
  const std::vector<Index> dims{24, 24, 24};
  std::vector<double> v(dims_product(dims));
  std::normal_distribution<double> normal(0.3, 1.0);
  for (auto& e : v) e = normal(rng);
  const Volume x(dims, v);
  const auto mask = make_preset("3d-6");
  std::size_t largest_entering = 0;
  SolverHooks hooks;
  hooks.on_outer = [&](std::size_t, std::span<const Index> entered, std::span<const double>) {
    largest_entering = std::max(largest_entering, entered.size());
  };
  const auto cg = solve(x, mask, SolverConfig{.inner_solver = InnerSolver::conjugate_gradient}, hooks);
  const auto sw = solve(x, mask, SolverConfig{.inner_solver = InnerSolver::sweep});
  ASSERT_TRUE(cg.report.converged) << cg.report.stop_reason;
  ASSERT_TRUE(sw.report.converged) << sw.report.stop_reason;
  EXPECT_GT(cg.report.active_set_size, 4096u);
  EXPECT_GT(largest_entering, 4096u);
  EXPECT_LE(max_abs_diff(cg.y.data(), sw.y.data()), 1e-7 * max_abs(x.data()));
  EXPECT_LE(relative_mean_change(x, cg), 1e-8);
}
