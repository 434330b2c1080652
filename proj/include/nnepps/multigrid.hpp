#pragma once

// Sparse symmetric systems on voxel subsets, preconditioned CG, and a
// geometric-aggregation multigrid preconditioner for them.
//
// The aggregation multigrid groups voxels into 2x2x2 blocks of grid
// coordinates (only the members that exist), takes the Galerkin product
// P^T A P with piecewise-constant P, and recurses until the system is small
// enough for a dense Cholesky factorization. One V-cycle with a forward
// Gauss-Seidel pre-smoothing and a backward post-smoothing is a symmetric
// positive definite operator, so it can precondition CG.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "nnepps/grid.hpp"

namespace nnepps::detail {

/// Symmetric sparse matrix: diagonal plus off-diagonal rows in CSR form.
struct SymmetricCsr {
  std::vector<double> diag;
  std::vector<Index> row{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  Index size() const { return diag.size(); }

  void clear() {
    diag.clear();
    row.assign(1, 0);
    col.clear();
    val.clear();
  }

  void multiply(const std::vector<double>& v, std::vector<double>& out) const {
    for (Index a = 0; a < diag.size(); ++a) {
      double acc = diag[a] * v[a];
      for (Index k = row[a]; k < row[a + 1]; ++k) acc += val[k] * v[col[k]];
      out[a] = acc;
    }
  }
};

using GridPoint = std::array<std::uint32_t, 3>;

class AggregationMultigrid {
public:
  /// Systems at or below this size are factorized densely.
  static constexpr Index kCoarsestSize = 1024;
  static constexpr int kMaxLevels = 12;

  AggregationMultigrid(SymmetricCsr fine, std::vector<GridPoint> points) {
    levels_.push_back({std::move(fine), {}, {}, {}, {}});
    while (levels_.back().a.size() > kCoarsestSize && static_cast<int>(levels_.size()) < kMaxLevels) {
      auto& lv = levels_.back();
      std::vector<GridPoint> coarse_points;
      lv.agg = aggregate(points, coarse_points);
      if (coarse_points.size() * 5 > points.size() * 4) break;  // coarsening stalled
      SymmetricCsr coarse = galerkin(lv.a, lv.agg, coarse_points.size());
      points = std::move(coarse_points);
      levels_.push_back({std::move(coarse), {}, {}, {}, {}});
    }
    for (auto& lv : levels_) {
      lv.x.resize(lv.a.size());
      lv.b.resize(lv.a.size());
      lv.r.resize(lv.a.size());
    }
    const auto& last = levels_.back().a;
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(last.size(), last.size());
    for (Index i = 0; i < last.size(); ++i) {
      dense(i, i) = last.diag[i];
      for (Index k = last.row[i]; k < last.row[i + 1]; ++k) dense(i, last.col[k]) = last.val[k];
    }
    coarse_.compute(dense);
    ok_ = coarse_.info() == Eigen::Success;
    levels_.back().agg.clear();
  }

  /// False when the dense factorization of the coarsest system fails. A
  /// singular system can still pass through rounding; CG on it then stalls
  /// or breaks down instead.
  bool ok() const { return ok_; }
  std::size_t levels() const { return levels_.size(); }

  /// z = B r, one V-cycle from a zero initial guess.
  void apply(const std::vector<double>& r, std::vector<double>& z) {
    levels_[0].b = r;
    cycle(0);
    z = levels_[0].x;
  }

private:
  struct Level {
    SymmetricCsr a;
    std::vector<std::uint32_t> agg;  // row -> coarse row (all but the coarsest)
    std::vector<double> x, b, r;
  };

  static std::vector<std::uint32_t> aggregate(const std::vector<GridPoint>& points, std::vector<GridPoint>& coarse_points) {
    auto key = [](const GridPoint& p) {
      return (static_cast<std::uint64_t>(p[0] >> 1) << 42) | (static_cast<std::uint64_t>(p[1] >> 1) << 21) |
             static_cast<std::uint64_t>(p[2] >> 1);
    };
    std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) keyed[i] = {key(points[i]), static_cast<std::uint32_t>(i)};
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::uint32_t> agg(points.size());
    coarse_points.clear();
    for (std::size_t k = 0; k < keyed.size(); ++k) {
      if (k == 0 || keyed[k].first != keyed[k - 1].first) {
        const auto& p = points[keyed[k].second];
        coarse_points.push_back({p[0] >> 1, p[1] >> 1, p[2] >> 1});
      }
      agg[keyed[k].second] = static_cast<std::uint32_t>(coarse_points.size() - 1);
    }
    return agg;
  }

  static SymmetricCsr galerkin(const SymmetricCsr& a, const std::vector<std::uint32_t>& agg, Index nc) {
    std::vector<Index> start(nc + 1, 0);
    for (auto c : agg) ++start[c + 1];
    std::partial_sum(start.begin(), start.end(), start.begin());
    std::vector<std::uint32_t> members(agg.size());
    {
      auto fill = start;
      for (std::size_t i = 0; i < agg.size(); ++i) members[fill[agg[i]]++] = static_cast<std::uint32_t>(i);
    }
    SymmetricCsr c;
    c.diag.assign(nc, 0.0);
    c.row.assign(1, 0);
    constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> slot(nc, kNone);
    std::vector<std::uint32_t> used;
    for (Index I = 0; I < nc; ++I) {
      double d = 0.0;
      used.clear();
      for (Index m = start[I]; m < start[I + 1]; ++m) {
        const Index i = members[m];
        d += a.diag[i];
        for (Index k = a.row[i]; k < a.row[i + 1]; ++k) {
          const std::uint32_t J = agg[a.col[k]];
          if (J == I) {
            d += a.val[k];
          } else if (slot[J] == kNone) {
            slot[J] = static_cast<std::uint32_t>(c.col.size());
            c.col.push_back(J);
            c.val.push_back(a.val[k]);
            used.push_back(J);
          } else {
            c.val[slot[J]] += a.val[k];
          }
        }
      }
      for (auto J : used) slot[J] = kNone;
      c.diag[I] = d;
      c.row.push_back(c.col.size());
    }
    return c;
  }

  void cycle(std::size_t l) {
    auto& lv = levels_[l];
    const Index n = lv.a.size();
    if (l + 1 == levels_.size()) {
      Eigen::Map<const Eigen::VectorXd> b(lv.b.data(), static_cast<Eigen::Index>(n));
      Eigen::Map<Eigen::VectorXd>(lv.x.data(), static_cast<Eigen::Index>(n)) = coarse_.solve(b);
      return;
    }
    const auto& a = lv.a;
    // Forward Gauss-Seidel from x = 0.
    for (Index i = 0; i < n; ++i) {
      double s = lv.b[i];
      for (Index k = a.row[i]; k < a.row[i + 1]; ++k)
        if (a.col[k] < i) s -= a.val[k] * lv.x[a.col[k]];
      lv.x[i] = s / a.diag[i];
    }
    a.multiply(lv.x, lv.r);
    auto& next = levels_[l + 1];
    std::fill(next.b.begin(), next.b.end(), 0.0);
    for (Index i = 0; i < n; ++i) next.b[lv.agg[i]] += lv.b[i] - lv.r[i];
    cycle(l + 1);
    for (Index i = 0; i < n; ++i) lv.x[i] += next.x[lv.agg[i]];
    // Backward Gauss-Seidel.
    for (Index i = n; i-- > 0;) {
      double s = lv.b[i];
      for (Index k = a.row[i]; k < a.row[i + 1]; ++k) s -= a.val[k] * lv.x[a.col[k]];
      lv.x[i] = s / a.diag[i];
    }
  }

  std::vector<Level> levels_;
  Eigen::LLT<Eigen::MatrixXd> coarse_;
  bool ok_ = false;
};

/// Preconditioned CG on m x = b until max|b - m x| <= bound (true residual).
/// precond(r, z) computes z = B r. Returns false on breakdown (a singular
/// system) or when the iteration cap is reached.
template <class Precond>
bool pcg(const SymmetricCsr& m, const std::vector<double>& b, std::vector<double>& x, double bound, std::size_t cap,
         std::size_t& iterations, Precond&& precond) {
  const Index n = b.size();
  auto dot = [](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (Index k = 0; k < u.size(); ++k) s += u[k] * v[k];
    return s;
  };
  auto max_abs_vec = [](const std::vector<double>& v) {
    double mx = 0.0;
    for (double e : v) mx = std::max(mx, std::abs(e));
    return mx;
  };
  std::vector<double> r = b, z(n), p(n), q(n);
  m.multiply(x, q);
  for (Index a = 0; a < n; ++a) r[a] = b[a] - q[a];
  if (max_abs_vec(r) <= bound) return true;
  precond(r, z);
  p = z;
  double rz = dot(r, z);
  for (std::size_t it = 0; it < cap; ++it) {
    m.multiply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) return false;
    const double step = rz / pq;
    for (Index a = 0; a < n; ++a) {
      x[a] += step * p[a];
      r[a] -= step * q[a];
    }
    ++iterations;
    if (max_abs_vec(r) <= bound) {
      m.multiply(x, q);
      for (Index a = 0; a < n; ++a) r[a] = b[a] - q[a];
      if (max_abs_vec(r) <= bound) return true;
    }
    precond(r, z);
    const double rz_next = dot(r, z);
    if (!(rz_next > 0.0)) return false;
    const double beta = rz_next / rz;
    rz = rz_next;
    for (Index a = 0; a < n; ++a) p[a] = z[a] + beta * p[a];
  }
  return false;
}

inline void jacobi(const SymmetricCsr& m, const std::vector<double>& r, std::vector<double>& z) {
  for (Index a = 0; a < r.size(); ++a) z[a] = r[a] / m.diag[a];
}

}  // namespace nnepps::detail
