#pragma once

// Brute-force references for small instances of
//
//   minimize ||alpha||  subject to  alpha >= 0,  x + H alpha >= 0
//
// built on an explicitly assembled H. Three independent routes:
//   * L1: two-phase dense tableau simplex with Bland's rule.
//   * L2: primal active-set QP with least-squares solves on the working set,
//         started from a phase-one vertex.
//   * Enumeration: every candidate active set S, solving H_SS alpha_S = -x_S.
// None of them shares code with the sweep solver.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nnepps/errors.hpp"
#include "nnepps/grid.hpp"
#include "nnepps/operator.hpp"
#include "nnepps/spread.hpp"

namespace nnepps {

enum class Norm { l1, l2 };

inline Norm parse_norm(std::string_view s) {
  if (s == "l1" || s == "L1") return Norm::l1;
  if (s == "l2" || s == "L2") return Norm::l2;
  throw ValidationError("unknown norm '" + std::string(s) + "' (expected l1 or l2)");
}

struct DenseLP {
  Norm objective = Norm::l1;
  DenseMatrix h;
  std::vector<double> x;

  void validate() const {
    if (h.rows != h.cols || h.rows != x.size()) throw ValidationError("H must be square and match x");
    if (h.cols > kDenseVoxelCap) throw SizeLimitError("oracle limited to " + std::to_string(kDenseVoxelCap) + " variables");
    for (Index c = 0; c < h.cols; ++c) {
      double s = 0.0;
      for (Index r = 0; r < h.rows; ++r) s += h(r, c);
      if (std::abs(s) > 1e-14) throw ValidationError("column " + std::to_string(c) + " of H does not sum to zero");
    }
  }
};

struct OracleSolution {
  std::vector<double> y;
  std::vector<double> alpha;
  double objective = 0.0;  // sum(alpha) for L1, sum(alpha^2) for L2
};

namespace oracle_detail {

/// Dense tableau for  min c^T z  s.t.  A z = b, z >= 0, b >= 0.
/// Columns: alpha (n), surplus s (n), artificials; last column is the rhs.
class Tableau {
public:
  Tableau(const DenseMatrix& h, const std::vector<double>& x_scaled) : n_(h.cols), m_(h.rows) {
    // Row i:  sum_j H_ij alpha_j - s_i = -x_i. Rows with x_i >= 0 are negated
    // so s_i starts basic; the others get an artificial.
    std::vector<Index> art_rows;
    for (Index i = 0; i < m_; ++i)
      if (x_scaled[i] < 0.0) art_rows.push_back(i);
    n_art_ = art_rows.size();
    cols_ = 2 * n_ + n_art_;
    t_.assign((m_ + 1) * (cols_ + 1), 0.0);
    basis_.assign(m_, 0);
    Index a = 0;
    for (Index i = 0; i < m_; ++i) {
      const double sign = x_scaled[i] >= 0.0 ? -1.0 : 1.0;
      for (Index j = 0; j < n_; ++j) at(i, j) = sign * h(i, j);
      at(i, n_ + i) = -sign;
      at(i, cols_) = -sign * x_scaled[i];
      if (sign < 0.0) {
        basis_[i] = n_ + i;
      } else {
        at(i, 2 * n_ + a) = 1.0;
        basis_[i] = 2 * n_ + a;
        ++a;
      }
    }
  }

  /// Phase one; returns false when the constraints are infeasible.
  bool phase_one() {
    std::vector<double> cost(cols_, 0.0);
    for (Index k = 2 * n_; k < cols_; ++k) cost[k] = 1.0;
    set_objective(cost);
    iterate(cols_);
    if (-at(m_, cols_) > kFeasEps) return false;
    drive_out_artificials();
    return true;
  }

  void phase_two() {
    std::vector<double> cost(cols_, 0.0);
    for (Index j = 0; j < n_; ++j) cost[j] = 1.0;
    set_objective(cost);
    iterate(2 * n_);
  }

  std::vector<double> alpha() const {
    std::vector<double> out(n_, 0.0);
    for (Index i = 0; i < m_; ++i)
      if (basis_[i] < n_ && !dropped_row(i)) out[basis_[i]] = std::max(0.0, at(i, cols_));
    return out;
  }

  std::size_t pivots() const { return pivots_; }

private:
  static constexpr double kPivotEps = 1e-11;
  static constexpr double kFeasEps = 1e-9;

  double& at(Index r, Index c) { return t_[r * (cols_ + 1) + c]; }
  double at(Index r, Index c) const { return t_[r * (cols_ + 1) + c]; }
  bool dropped_row(Index r) const { return basis_[r] == kDropped; }

  void set_objective(const std::vector<double>& cost) {
    for (Index c = 0; c <= cols_; ++c) at(m_, c) = c < cols_ ? cost[c] : 0.0;
    for (Index i = 0; i < m_; ++i) {
      if (dropped_row(i)) continue;
      const double cb = cost[basis_[i]];
      if (cb == 0.0) continue;
      for (Index c = 0; c <= cols_; ++c) at(m_, c) -= cb * at(i, c);
    }
  }

  void pivot(Index r, Index c) {
    const double p = at(r, c);
    for (Index k = 0; k <= cols_; ++k) at(r, k) /= p;
    for (Index i = 0; i <= m_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (Index k = 0; k <= cols_; ++k) at(i, k) -= f * at(r, k);
      at(i, c) = 0.0;
    }
    basis_[r] = c;
    ++pivots_;
  }

  /// Bland's rule: lowest-index improving column enters; among minimum-ratio
  /// rows, the one whose basic variable has the lowest index leaves.
  void iterate(Index allowed_cols) {
    const std::size_t cap = 50'000 + 200 * (m_ + cols_);
    for (std::size_t it = 0; it < cap; ++it) {
      Index enter = kDropped;
      for (Index c = 0; c < allowed_cols; ++c)
        if (at(m_, c) < -kPivotEps) {
          enter = c;
          break;
        }
      if (enter == kDropped) return;
      Index leave = kDropped;
      double best = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < m_; ++i) {
        if (dropped_row(i) || at(i, enter) <= kPivotEps) continue;
        const double ratio = at(i, cols_) / at(i, enter);
        if (leave == kDropped || ratio < best - 1e-14) {
          best = ratio;
          leave = i;
        } else if (ratio <= best + 1e-14 && basis_[i] < basis_[leave]) {
          best = std::min(best, ratio);
          leave = i;
        }
      }
      if (leave == kDropped) throw Error("simplex oracle: unbounded direction (H is not a valid transfer operator)");
      pivot(leave, enter);
    }
    throw Error("simplex oracle: pivot cap exceeded");
  }

  void drive_out_artificials() {
    for (Index i = 0; i < m_; ++i) {
      if (dropped_row(i) || basis_[i] < 2 * n_) continue;
      Index col = kDropped;
      for (Index c = 0; c < 2 * n_; ++c)
        if (std::abs(at(i, c)) > kPivotEps) {
          col = c;
          break;
        }
      if (col == kDropped)
        basis_[i] = kDropped;  // redundant row
      else
        pivot(i, col);
    }
  }

  static constexpr Index kDropped = std::numeric_limits<Index>::max();
  Index n_, m_, n_art_ = 0, cols_ = 0;
  std::vector<double> t_;
  std::vector<Index> basis_;
  std::size_t pivots_ = 0;
};

inline double scale_of(const std::vector<double>& x) {
  const double s = max_abs(x);
  return s > 0.0 ? s : 1.0;
}

inline std::vector<double> image_of(const DenseMatrix& h, const std::vector<double>& x, const std::vector<double>& alpha) {
  auto y = h.multiply(alpha);
  for (Index i = 0; i < y.size(); ++i) y[i] += x[i];
  return y;
}

inline Eigen::MatrixXd to_eigen(const DenseMatrix& h) {
  Eigen::MatrixXd out(h.rows, h.cols);
  for (Index r = 0; r < h.rows; ++r)
    for (Index c = 0; c < h.cols; ++c) out(r, c) = h(r, c);
  return out;
}

/// Primal active-set method (Nocedal & Wright, Alg. 16.3) for
///   min 0.5 |a|^2  s.t.  a >= 0,  H a >= -x,
/// from a feasible start.
inline std::vector<double> active_set_qp(const DenseMatrix& h, const std::vector<double>& x, std::vector<double> start) {
  const Index n = h.cols;
  // Constraint k < n: a_k >= 0. Constraint n + i: (H a)_i >= -x_i.
  const Eigen::MatrixXd H = to_eigen(h);
  Eigen::MatrixXd C(2 * n, n);
  C.topRows(n).setIdentity();
  C.bottomRows(n) = H;
  Eigen::VectorXd d(2 * n);
  d.head(n).setZero();
  for (Index i = 0; i < n; ++i) d(n + i) = -x[i];
  Eigen::VectorXd a = Eigen::Map<Eigen::VectorXd>(start.data(), n);

  constexpr double kActive = 1e-10;
  constexpr double kStep = 1e-12;
  std::vector<Index> work;
  auto rank_with = [&](const std::vector<Index>& w) {
    if (w.empty()) return Eigen::Index{0};
    Eigen::MatrixXd M(w.size(), n);
    for (std::size_t k = 0; k < w.size(); ++k) M.row(k) = C.row(w[k]);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
    qr.setThreshold(1e-10);
    return qr.rank();
  };
  for (Index k = 0; k < 2 * n; ++k) {
    if (std::abs(C.row(k).dot(a) - d(k)) > kActive) continue;
    work.push_back(k);
    if (static_cast<std::size_t>(rank_with(work)) < work.size()) work.pop_back();
  }

  const std::size_t cap = 1000 + 100 * 2 * n;
  for (std::size_t it = 0; it < cap; ++it) {
    const Eigen::VectorXd g = a;
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(work.size());
    Eigen::VectorXd p = -g;
    if (!work.empty()) {
      Eigen::MatrixXd At(n, work.size());
      for (std::size_t k = 0; k < work.size(); ++k) At.col(k) = C.row(work[k]).transpose();
      // g + p = At lambda with At^T p = 0: lambda is the least-squares fit of g.
      lambda = At.colPivHouseholderQr().solve(g);
      p = At * lambda - g;
    }
    if (p.norm() <= kStep * std::max(1.0, a.norm())) {
      Eigen::Index worst = -1;
      double most_negative = -1e-10;
      for (Eigen::Index k = 0; k < lambda.size(); ++k)
        if (lambda(k) < most_negative) {
          most_negative = lambda(k);
          worst = k;
        }
      if (worst < 0) {
        std::vector<double> out(n);
        for (Index i = 0; i < n; ++i) out[i] = std::max(0.0, a(i));
        return out;
      }
      work.erase(work.begin() + worst);
      continue;
    }
    double t = 1.0;
    Index blocking = 2 * n;
    for (Index k = 0; k < 2 * n; ++k) {
      if (std::find(work.begin(), work.end(), k) != work.end()) continue;
      const double cp = C.row(k).dot(p);
      if (cp >= -1e-14) continue;
      const double step = std::max(0.0, (d(k) - C.row(k).dot(a)) / cp);
      if (step < t) {
        t = step;
        blocking = k;
      }
    }
    a += t * p;
    if (blocking < 2 * n) work.push_back(blocking);
  }
  throw Error("active-set QP oracle: iteration cap exceeded");
}

}  // namespace oracle_detail

/// Exact small-scale optimum of the transfer problem under the LP's norm.
/// Throws InfeasibleError when no alpha makes x + H alpha non-negative.
inline OracleSolution oracle_solve(const DenseLP& lp) {
  lp.validate();
  const double scale = oracle_detail::scale_of(lp.x);
  std::vector<double> xs(lp.x.size());
  for (Index i = 0; i < xs.size(); ++i) xs[i] = lp.x[i] / scale;

  oracle_detail::Tableau tab(lp.h, xs);
  if (!tab.phase_one()) throw InfeasibleError("oracle: no non-negative redistribution exists");
  std::vector<double> alpha_s;
  if (lp.objective == Norm::l1) {
    tab.phase_two();
    alpha_s = tab.alpha();
  } else {
    alpha_s = oracle_detail::active_set_qp(lp.h, xs, tab.alpha());
  }
  OracleSolution out;
  out.alpha.resize(alpha_s.size());
  std::vector<double> terms;
  for (Index i = 0; i < alpha_s.size(); ++i) {
    out.alpha[i] = alpha_s[i] * scale;
    terms.push_back(lp.objective == Norm::l1 ? out.alpha[i] : out.alpha[i] * out.alpha[i]);
  }
  out.objective = sum(terms);
  out.y = oracle_detail::image_of(lp.h, lp.x, out.alpha);
  return out;
}

inline DenseLP make_dense_lp(const Volume& x, const SpreadMask& mask, BoundaryPolicy policy, Norm norm) {
  return {norm, assemble_dense(mask, x.dims(), policy), std::vector<double>(x.data().begin(), x.data().end())};
}

inline constexpr Index kEnumerationCap = 12;

/// Minimum-L1 solution by trying every candidate active set S: solve
/// H_SS alpha_S = -x_S, keep solutions with alpha >= 0 and y >= 0.
inline OracleSolution enumerate_active_sets(const DenseMatrix& h, const std::vector<double>& x) {
  const Index n = h.cols;
  if (n > kEnumerationCap) throw SizeLimitError("active-set enumeration limited to " + std::to_string(kEnumerationCap) + " voxels");
  const double scale = oracle_detail::scale_of(x);
  const double eps = 1e-10 * scale;
  const Eigen::MatrixXd H = oracle_detail::to_eigen(h);
  OracleSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  for (std::uint32_t set = 0; set < (1u << n); ++set) {
    std::vector<Index> s;
    for (Index i = 0; i < n; ++i)
      if (set & (1u << i)) s.push_back(i);
    std::vector<double> alpha(n, 0.0);
    if (!s.empty()) {
      Eigen::MatrixXd Hs(s.size(), s.size());
      Eigen::VectorXd rhs(s.size());
      for (std::size_t r = 0; r < s.size(); ++r) {
        rhs(r) = -x[s[r]];
        for (std::size_t c = 0; c < s.size(); ++c) Hs(r, c) = H(s[r], s[c]);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(Hs);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd sol = lu.solve(rhs);
      bool ok = true;
      for (std::size_t r = 0; r < s.size(); ++r) {
        if (sol(r) < -eps) ok = false;
        alpha[s[r]] = std::max(0.0, sol(r));
      }
      if (!ok) continue;
    }
    auto y = oracle_detail::image_of(h, x, alpha);
    if (*std::min_element(y.begin(), y.end()) < -eps) continue;
    const double obj = sum(alpha);
    if (obj < best.objective) best = {std::move(y), std::move(alpha), obj};
  }
  if (!std::isfinite(best.objective)) throw InfeasibleError("enumeration: no feasible active set");
  return best;
}

inline constexpr Index kNormEquivalenceCap = 256;

/// Largest voxelwise |y_L1 - y_L2| between the two oracle optima.
inline double norm_equivalence_check(const Volume& x, const SpreadMask& mask, BoundaryPolicy policy = BoundaryPolicy::renormalize) {
  if (x.size() > kNormEquivalenceCap)
    throw SizeLimitError("norm equivalence check limited to " + std::to_string(kNormEquivalenceCap) + " voxels");
  const auto l1 = oracle_solve(make_dense_lp(x, mask, policy, Norm::l1));
  const auto l2 = oracle_solve(make_dense_lp(x, mask, policy, Norm::l2));
  double dev = 0.0;
  for (Index i = 0; i < x.size(); ++i) dev = std::max(dev, std::abs(l1.y[i] - l2.y[i]));
  return dev;
}

}  // namespace nnepps
