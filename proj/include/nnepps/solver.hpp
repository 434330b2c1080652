#pragma once

// Non-negativity enforcement by minimal symmetric transfers:
//
//   minimize ||alpha||  subject to  alpha >= 0,  y = x + H alpha >= 0.
//
// Solved with a monotone active-set iteration:
//
//   y <- x, alpha <- 0, A <- {}
//   outer iteration k:
//     every voxel outside A with y[i] < -tol enters A (none on k = 1: done)
//     inner sweeps over A in sweep order: each member with y[i] < -tol_in
//       gets delta = -y[i], alpha[i] += delta, y += delta * (mask at i),
//       which sets y[i] to exactly zero; repeat until a sweep makes no update
//     if no voxel outside A went below -tol: done
//
// Restricted to the active set, H is an M-matrix, so the inner sweeps
// increase alpha monotonically towards the least solution, and any order of
// admitting negative voxels ends at the same point. Members of A are never
// removed and alpha never decreases.
//
// The inner sweeps use a worklist over sweep ranks. Only members that were
// negative at the start of a sweep, or that received a transfer during it,
// can be negative when visited, so skipping the rest is observably identical
// to a full sweep over A.

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nnepps/errors.hpp"
#include "nnepps/grid.hpp"
#include "nnepps/multigrid.hpp"
#include "nnepps/operator.hpp"
#include "nnepps/spread.hpp"

namespace nnepps {

struct SweepOrder {
  enum class Kind { lexicographic, reverse, custom, color_major };
  Kind kind = Kind::lexicographic;
  std::vector<Index> permutation;  // custom only: permutation[rank] = voxel

  static SweepOrder lexicographic() { return {}; }
  static SweepOrder reverse() { return {Kind::reverse, {}}; }
  static SweepOrder custom(std::vector<Index> perm) { return {Kind::custom, std::move(perm)}; }
  /// Voxels grouped by color (coordinate mod 2*reach+1 on every axis), colors
  /// in lexicographic order, voxels lexicographic within a color. Members of
  /// one color have disjoint mask footprints.
  static SweepOrder color_major() { return {Kind::color_major, {}}; }
};

inline std::string to_string(const SweepOrder& o) {
  switch (o.kind) {
    case SweepOrder::Kind::lexicographic: return "lexicographic";
    case SweepOrder::Kind::reverse: return "reverse";
    case SweepOrder::Kind::custom: return "custom";
    case SweepOrder::Kind::color_major: return "color-major";
  }
  return "unknown";
}

/// How each outer iteration drives the active set to zero.
///  sweep: Gauss-Seidel sweeps over the active set in sweep order.
///  conjugate_gradient: one preconditioned CG solve of the active-set system
///    (symmetrized by the boundary rescale), then sweeps for the residual.
/// Both reach the same fixed point; CG needs far fewer passes on large
/// active clusters, where sweeps converge diffusively.
enum class InnerSolver { sweep, conjugate_gradient };

inline InnerSolver parse_inner_solver(std::string_view s) {
  if (s == "sweep") return InnerSolver::sweep;
  if (s == "cg" || s == "conjugate-gradient") return InnerSolver::conjugate_gradient;
  throw ValidationError("unknown inner solver '" + std::string(s) + "' (expected sweep or cg)");
}

inline std::string to_string(InnerSolver s) { return s == InnerSolver::sweep ? "sweep" : "cg"; }

struct SolverConfig {
  /// Absolute negativity threshold; defaults to 1e-9 * max|x|.
  std::optional<double> neg_tolerance;
  /// Active-set members are driven to within neg_tolerance * inner_accuracy
  /// of zero before the next outer iteration.
  double inner_accuracy = 1e-3;
  std::size_t max_outer_iterations = 10'000;
  /// Cap on inner sweeps per outer iteration (and on CG iterations).
  std::size_t max_inner_sweeps = 1'000'000;
  SweepOrder sweep_order;
  InnerSolver inner_solver = InnerSolver::sweep;
  BoundaryPolicy boundary = BoundaryPolicy::renormalize;
  /// > 1 enables the colored parallel mode (forces the color-major order).
  unsigned threads = 1;

  void validate() const {
    if (neg_tolerance && !(*neg_tolerance > 0.0)) throw ValidationError("neg_tolerance must be positive");
    if (!(inner_accuracy > 0.0) || inner_accuracy > 1.0) throw ValidationError("inner_accuracy must be in (0, 1]");
    if (max_outer_iterations < 1 || max_inner_sweeps < 1) throw ValidationError("iteration caps must be at least 1");
    if (threads < 1) throw ValidationError("threads must be at least 1");
  }
};

inline constexpr double kDefaultRelativeTolerance = 1e-9;

inline double default_neg_tolerance(std::span<const double> x) {
  return std::max(kDefaultRelativeTolerance * max_abs(x), std::numeric_limits<double>::min());
}

struct SolverReport {
  std::size_t outer_iterations = 0;
  std::size_t inner_sweeps = 0;  // sweeps that updated at least one voxel
  std::size_t cg_iterations = 0;
  std::size_t total_site_updates = 0;
  std::size_t active_set_size = 0;  // count of alpha > 0
  double min_final_value = 0.0;     // before the residual clamp
  double mean_drift = 0.0;          // |sum(y) - sum(x)| / max(1, |sum(x)|), after the clamp
  double clamp_total = 0.0;         // mass added by clamping residual negatives
  double objective_l1 = 0.0;        // sum(alpha)
  double neg_tolerance = 0.0;
  bool converged = false;
  std::string stop_reason;
};

struct SolverResult {
  Volume y;
  TransferMap alpha;
  SolverReport report;
};

/// Instrumentation callbacks; both are optional.
struct SolverHooks {
  /// After the entering step of each outer iteration: iteration number (1-based),
  /// voxels that entered, and the current y before the inner sweeps.
  std::function<void(std::size_t, std::span<const Index>, std::span<const double>)> on_outer;
  /// After every inner sweep that updated something: current alpha.
  std::function<void(std::span<const double>)> on_sweep;
  /// After an outer iteration's inner sweeps converged: iteration number and y.
  std::function<void(std::size_t, std::span<const double>)> on_outer_done;
};

enum class Feasibility { feasible, infeasible };

inline constexpr double kFeasibilityTolerance = 1e-12;

/// A non-negative redistribution exists iff the image mean is non-negative
/// (for a mask whose neighbor graph connects the grid).
inline Feasibility check_feasible(std::span<const double> x) {
  return sum(x) >= -kFeasibilityTolerance * abs_sum(x) ? Feasibility::feasible : Feasibility::infeasible;
}

inline Feasibility check_feasible(const Volume& x) { return check_feasible(x.data()); }

namespace detail {

/// rank <-> voxel mapping for a sweep order.
class RankMap {
public:
  RankMap(const SweepOrder& order, const CompiledStencil& st) : kind_(order.kind), n_(st.size()) {
    using K = SweepOrder::Kind;
    if (kind_ == K::custom) {
      perm_ = order.permutation;
      if (perm_.size() != n_) throw ValidationError("custom sweep order must list every voxel exactly once");
    } else if (kind_ == K::color_major) {
      perm_ = color_major_permutation(st);
    }
    if (!perm_.empty()) {
      rank_.assign(n_, n_);
      for (Index r = 0; r < n_; ++r) {
        if (perm_[r] >= n_ || rank_[perm_[r]] != n_) throw ValidationError("custom sweep order is not a permutation");
        rank_[perm_[r]] = r;
      }
    }
  }

  Index voxel(Index r) const {
    if (!perm_.empty()) return perm_[r];
    return kind_ == SweepOrder::Kind::reverse ? n_ - 1 - r : r;
  }
  Index rank(Index i) const {
    if (!rank_.empty()) return rank_[i];
    return kind_ == SweepOrder::Kind::reverse ? n_ - 1 - i : i;
  }

  /// [begin, end) rank range of each color (color-major orders only).
  std::vector<std::pair<Index, Index>> color_ranges;

private:
  std::vector<Index> color_major_permutation(const CompiledStencil& st) {
    const Extent& e = st.extent();
    const auto r = st.reach();
    std::array<Index, 3> mod{};
    for (int a = 0; a < 3; ++a) mod[a] = static_cast<Index>(2 * r[a] + 1);
    std::vector<Index> perm;
    perm.reserve(n_);
    for (Index cz = 0; cz < mod[0]; ++cz)
      for (Index cy = 0; cy < mod[1]; ++cy)
        for (Index cx = 0; cx < mod[2]; ++cx) {
          const Index begin = perm.size();
          for (Index z = cz; z < e.n[0]; z += mod[0])
            for (Index y = cy; y < e.n[1]; y += mod[1])
              for (Index x = cx; x < e.n[2]; x += mod[2]) perm.push_back((z * e.n[1] + y) * e.n[2] + x);
          if (perm.size() > begin) color_ranges.emplace_back(begin, perm.size());
        }
    return perm;
  }

  SweepOrder::Kind kind_;
  Index n_;
  std::vector<Index> perm_;
  std::vector<Index> rank_;
};

/// Fixed pool running one job per worker and joining, for the colored mode.
class ForkJoinPool {
public:
  explicit ForkJoinPool(unsigned workers) {
    for (unsigned w = 1; w < workers; ++w) threads_.emplace_back([this, w] { loop(w); });
    size_ = workers;
  }
  ~ForkJoinPool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }
  ForkJoinPool(const ForkJoinPool&) = delete;
  ForkJoinPool& operator=(const ForkJoinPool&) = delete;

  unsigned size() const { return size_; }

  /// Runs job(worker) on every worker, including the calling thread as worker 0.
  void run(const std::function<void(unsigned)>& job) {
    {
      std::lock_guard lock(mu_);
      job_ = &job;
      pending_ = size_ - 1;
      ++generation_;
    }
    cv_.notify_all();
    job(0);
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

private:
  void loop(unsigned w) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(unsigned)>* job = nullptr;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        job = job_;
      }
      (*job)(w);
      {
        std::lock_guard lock(mu_);
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  std::vector<std::thread> threads_;
  unsigned size_ = 1;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(unsigned)>* job_ = nullptr;
  unsigned pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

class ActiveSetSweeper {
public:
  ActiveSetSweeper(const Volume& x, const SpreadMask& mask, const SolverConfig& cfg)
      : cfg_(cfg),
        stencil_(mask, x.dims(), cfg.boundary),
        ranks_(cfg.threads > 1 ? SweepOrder::color_major() : cfg.sweep_order, stencil_),
        n_(x.size()),
        y_(x.data().begin(), x.data().end()),
        alpha_(n_, 0.0),
        in_active_(n_, 0),
        touched_(n_, 0),
        cur_((n_ + 63) / 64, 0),
        next_((n_ + 63) / 64, 0) {
    tol_ = cfg.neg_tolerance.value_or(default_neg_tolerance(x.data()));
    inner_tol_ = tol_ * cfg.inner_accuracy;
    if (cfg.threads > 1) pool_.emplace(cfg.threads);
  }

  SolverReport run(const SolverHooks& hooks) {
    SolverReport rep;
    rep.neg_tolerance = tol_;
    std::vector<Index> entered;
    // The first entering step examines every voxel; later ones only voxels
    // that received a transfer.
    for (Index i = 0; i < n_; ++i)
      if (y_[i] < -tol_) entered.push_back(i);
    for (std::size_t k = 1;; ++k) {
      rep.outer_iterations = k;
      if (entered.empty()) {
        rep.converged = true;
        rep.stop_reason = "no negative voxel left";
        break;
      }
      if (k > cfg_.max_outer_iterations) {
        rep.outer_iterations = cfg_.max_outer_iterations;
        rep.stop_reason = "outer iteration cap reached";
        break;
      }
      for (Index i : entered) {
        in_active_[i] = 1;
        active_.push_back(i);
        set_bit(cur_, ranks_.rank(i));
      }
      if (hooks.on_outer) hooks.on_outer(k, entered, y_);
      if (!inner_solve(rep, hooks)) {
        rep.stop_reason = "inner sweep cap reached";
        break;
      }
      if (hooks.on_outer_done) hooks.on_outer_done(k, y_);
      entered.clear();
      for (Index j : touched_list_) {
        touched_[j] = 0;
        if (!in_active_[j] && y_[j] < -tol_) entered.push_back(j);
      }
      touched_list_.clear();
      std::sort(entered.begin(), entered.end());
      if (entered.empty()) {
        rep.converged = true;
        rep.stop_reason = "no negative voxel left";
        break;
      }
    }
    return rep;
  }

  std::vector<double>& y() { return y_; }
  std::vector<double>& alpha() { return alpha_; }

private:
  static void set_bit(std::vector<std::uint64_t>& bits, Index r) { bits[r >> 6] |= std::uint64_t{1} << (r & 63); }

  static void set_bit_atomic(std::vector<std::uint64_t>& bits, Index r) {
    std::atomic_ref<std::uint64_t>(bits[r >> 6]).fetch_or(std::uint64_t{1} << (r & 63), std::memory_order_relaxed);
  }

  /// Processes voxel at rank r if it is still negative. Returns true on update.
  template <bool Atomic>
  bool visit(Index r, std::vector<Index>& touched_out) {
    const Index i = ranks_.voxel(r);
    if (!(y_[i] < -inner_tol_)) return false;
    const double delta = -y_[i];
    alpha_[i] += delta;
    stencil_.scatter(y_, i, delta);
    y_[i] = 0.0;  // exact already for interior voxels; pins it at boundaries too
    stencil_.for_each_neighbor(i, [&](Index j, double) {
      if (in_active_[j]) {
        const Index rj = ranks_.rank(j);
        auto& target = rj > r ? cur_ : next_;
        if constexpr (Atomic)
          set_bit_atomic(target, rj);
        else
          set_bit(target, rj);
      } else if (!touched_[j]) {
        touched_[j] = 1;
        touched_out.push_back(j);
      }
    });
    return true;
  }

  bool inner_solve(SolverReport& rep, const SolverHooks& hooks) {
    if (cfg_.inner_solver == InnerSolver::conjugate_gradient && cg_solve(rep)) {
      // Queue whatever residual negativity the CG step left for the sweeps.
      std::fill(cur_.begin(), cur_.end(), 0);
      for (Index i : active_)
        if (y_[i] < -inner_tol_) set_bit(cur_, ranks_.rank(i));
    }
    for (std::size_t sweep = 0;; ++sweep) {
      const std::size_t updates = pool_ ? parallel_sweep() : serial_sweep();
      std::swap(cur_, next_);
      if (updates == 0) return true;
      rep.total_site_updates += updates;
      ++rep.inner_sweeps;
      if (hooks.on_sweep) hooks.on_sweep(alpha_);
      if (sweep + 1 >= cfg_.max_inner_sweeps) {
        // One more check: converged exactly at the cap is still converged.
        for (auto w : cur_)
          if (w != 0) return false;
        return true;
      }
    }
  }

  /// Solves M db = b on the active set A, where M = diag(kept) + W_AA (W the
  /// raw neighbor weights) and b = max(0, -y_A). With da = kept * db this is
  /// H_AA da = -y_A, and M is a symmetric M-matrix, so db >= 0. Returns false
  /// (leaving y and alpha untouched) if CG does not reach the residual bound,
  /// e.g. on a component with no voxel outside A, where M is singular.
  bool cg_solve(SolverReport& rep) {
    const Index na = active_.size();
    constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
    if (pos_.empty()) pos_.assign(n_, kNone);
    for (Index a = 0; a < na; ++a) pos_[active_[a]] = static_cast<std::uint32_t>(a);

    std::vector<double> diag(na), b(na);
    std::vector<Index> row(na + 1, 0);
    std::vector<std::uint32_t> col;
    std::vector<double> val;
    for (Index a = 0; a < na; ++a) {
      const Index i = active_[a];
      diag[a] = stencil_.kept_weight(i);
      b[a] = std::max(0.0, -y_[i]);
      stencil_.for_each_neighbor(i, [&](Index j, double w) {
        if (pos_[j] != kNone) {
          col.push_back(pos_[j]);
          val.push_back(w);
        }
      });
      row[a + 1] = col.size();
    }
    // Independent solves per connected component of the active set; those
    // with nothing to correct are skipped.
    const double bound = 0.25 * inner_tol_;
    std::vector<double> x(na, 0.0);
    std::vector<std::uint32_t> comp(na, kNone);
    std::vector<Index> members;
    std::vector<std::uint32_t> local_of(na, kNone);
    SymmetricCsr sub;
    std::vector<double> sub_b, sub_x;
    for (Index seed = 0; seed < na; ++seed) {
      if (comp[seed] != kNone) continue;
      members.assign(1, seed);
      comp[seed] = static_cast<std::uint32_t>(seed);
      double worst = b[seed];
      for (Index k = 0; k < members.size(); ++k)
        for (Index e = row[members[k]]; e < row[members[k] + 1]; ++e)
          if (comp[col[e]] == kNone) {
            comp[col[e]] = static_cast<std::uint32_t>(seed);
            members.push_back(col[e]);
            worst = std::max(worst, b[col[e]]);
          }
      if (worst <= bound) continue;
      for (Index k = 0; k < members.size(); ++k) local_of[members[k]] = static_cast<std::uint32_t>(k);
      sub.clear();
      sub_b.clear();
      for (Index a : members) {
        sub.diag.push_back(diag[a]);
        sub_b.push_back(b[a]);
        for (Index e = row[a]; e < row[a + 1]; ++e) {
          sub.col.push_back(local_of[col[e]]);
          sub.val.push_back(val[e]);
        }
        sub.row.push_back(sub.col.size());
      }
      sub_x.assign(members.size(), 0.0);
      if (!component_solve(sub, members, sub_b, sub_x, bound, rep)) return false;
      for (Index k = 0; k < members.size(); ++k) x[members[k]] = sub_x[k];
    }

    for (Index a = 0; a < na; ++a) {
      const double delta = std::max(0.0, x[a] * diag[a]);
      if (delta == 0.0) continue;
      const Index i = active_[a];
      alpha_[i] += delta;
      stencil_.scatter(y_, i, delta);
      ++rep.total_site_updates;
      stencil_.for_each_neighbor(i, [&](Index j, double) {
        if (!in_active_[j] && !touched_[j]) {
          touched_[j] = 1;
          touched_list_.push_back(j);
        }
      });
    }
    return true;
  }

  /// Small components use Jacobi-preconditioned CG; large ones, where the
  /// Jacobi iteration count grows with the component diameter, use the
  /// aggregation multigrid preconditioner.
  bool component_solve(const SymmetricCsr& m, const std::vector<Index>& members, const std::vector<double>& b,
                       std::vector<double>& x, double bound, SolverReport& rep) {
    const auto jacobi_pc = [&](const std::vector<double>& r, std::vector<double>& z) { jacobi(m, r, z); };
    if (m.size() <= kMultigridMinSize) return pcg(m, b, x, bound, cfg_.max_inner_sweeps, rep.cg_iterations, jacobi_pc);
    std::vector<GridPoint> points(members.size());
    const Extent& e = stencil_.extent();
    for (Index k = 0; k < members.size(); ++k) {
      const auto c = e.coords(active_[members[k]]);
      points[k] = {static_cast<std::uint32_t>(c[0]), static_cast<std::uint32_t>(c[1]), static_cast<std::uint32_t>(c[2])};
    }
    AggregationMultigrid mg(m, std::move(points));
    if (!mg.ok()) return pcg(m, b, x, bound, cfg_.max_inner_sweeps, rep.cg_iterations, jacobi_pc);
    return pcg(m, b, x, bound, cfg_.max_inner_sweeps, rep.cg_iterations,
               [&](const std::vector<double>& r, std::vector<double>& z) { mg.apply(r, z); });
  }

  static constexpr Index kMultigridMinSize = 4096;

  std::size_t serial_sweep() {
    std::size_t updates = 0;
    for (Index w = 0; w < cur_.size(); ++w) {
      while (cur_[w] != 0) {
        const int b = std::countr_zero(cur_[w]);
        cur_[w] &= cur_[w] - 1;
        if (visit<false>(w * 64 + static_cast<Index>(b), touched_list_)) ++updates;
      }
    }
    return updates;
  }

  std::size_t parallel_sweep() {
    std::size_t updates = 0;
    const unsigned workers = pool_->size();
    std::vector<std::vector<Index>> touched(workers);
    std::vector<std::size_t> counts(workers, 0);
    std::vector<Index> batch;
    for (const auto& [begin, end] : ranks_.color_ranges) {
      // Same-color members cannot add bits inside their own range, so the
      // batch is fixed once collected.
      batch.clear();
      for (Index r = begin; r < end;) {
        const Index w = r >> 6;
        std::uint64_t word = cur_[w];
        const Index lo = w * 64;
        if (lo < begin) word &= ~std::uint64_t{0} << (begin - lo);
        if (end < lo + 64) word &= (std::uint64_t{1} << (end - lo)) - 1;
        cur_[w] &= ~word;
        while (word != 0) {
          batch.push_back(lo + static_cast<Index>(std::countr_zero(word)));
          word &= word - 1;
        }
        r = lo + 64;
      }
      if (batch.empty()) continue;
      const std::function<void(unsigned)> job = [&](unsigned t) {
        const std::size_t chunk = (batch.size() + workers - 1) / workers;
        const std::size_t b = std::min(batch.size(), t * chunk);
        const std::size_t e = std::min(batch.size(), b + chunk);
        for (std::size_t k = b; k < e; ++k)
          if (visit<true>(batch[k], touched[t])) ++counts[t];
      };
      pool_->run(job);
    }
    for (unsigned t = 0; t < workers; ++t) {
      updates += counts[t];
      touched_list_.insert(touched_list_.end(), touched[t].begin(), touched[t].end());
    }
    return updates;
  }

  SolverConfig cfg_;
  CompiledStencil stencil_;
  RankMap ranks_;
  Index n_;
  double tol_ = 0.0;
  double inner_tol_ = 0.0;
  std::vector<double> y_;
  std::vector<double> alpha_;
  std::vector<std::uint8_t> in_active_;
  std::vector<std::uint8_t> touched_;
  std::vector<Index> touched_list_;
  std::vector<Index> active_;
  std::vector<std::uint32_t> pos_;
  std::vector<std::uint64_t> cur_;
  std::vector<std::uint64_t> next_;
  std::optional<ForkJoinPool> pool_;
};

}  // namespace detail

/// Minimal-transfer non-negative image. Throws InfeasibleError for a
/// negative-mean input. Hitting an iteration cap is not an exception: the
/// partial y is returned with report.converged == false.
inline SolverResult solve(const Volume& x, const SpreadMask& mask, const SolverConfig& cfg = {},
                          const SolverHooks& hooks = {}) {
  cfg.validate();
  require_valid(mask);
  if (check_feasible(x) == Feasibility::infeasible)
    throw InfeasibleError("image sum " + std::to_string(sum(x)) + " is negative; no non-negative redistribution exists");

  detail::ActiveSetSweeper sweeper(x, mask, cfg);
  SolverReport rep = sweeper.run(hooks);
  auto& y = sweeper.y();
  auto& alpha = sweeper.alpha();

  rep.min_final_value = min_value(y);
  if (rep.converged) {
    std::vector<double> clamped;
    for (double& v : y)
      if (v < 0.0) {
        clamped.push_back(-v);
        v = 0.0;
      }
    rep.clamp_total = sum(clamped);
  }
  const double sx = sum(x);
  rep.mean_drift = std::abs(sum(y) - sx) / std::max(1.0, std::abs(sx));
  rep.objective_l1 = sum(alpha);
  rep.active_set_size = static_cast<std::size_t>(std::count_if(alpha.begin(), alpha.end(), [](double a) { return a > 0.0; }));

  SolverResult out{x.with_data(std::move(y)), TransferMap(x.dims()), rep};
  out.alpha.data = std::move(alpha);
  return out;
}

/// Solves under each sweep order and returns the largest voxelwise |y_a - y_b|
/// over all pairs (the minimizing image is unique, so this should be ~0).
inline double solve_deterministic_check(const Volume& x, const SpreadMask& mask, const SolverConfig& cfg,
                                        const std::vector<SweepOrder>& orders) {
  std::vector<Volume> ys;
  for (const auto& o : orders) {
    SolverConfig c = cfg;
    c.sweep_order = o;
    c.threads = 1;
    ys.push_back(solve(x, mask, c).y);
  }
  double dev = 0.0;
  for (std::size_t a = 0; a < ys.size(); ++a)
    for (std::size_t b = a + 1; b < ys.size(); ++b)
      for (Index i = 0; i < x.size(); ++i) dev = std::max(dev, std::abs(ys[a][i] - ys[b][i]));
  return dev;
}

}  // namespace nnepps
