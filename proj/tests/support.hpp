#pragma once

// Random instance generators shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "nnepps/nnepps.hpp"

namespace nnepps::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Random valid mask over the leading `dim` trailing axes. Axis neighbors are
/// always present (so the neighbor graph connects the grid); diagonal pairs
/// are included at random. Strengths are random, so weights are unequal.
inline SpreadMask random_mask(Rng& rng, int dim) {
  std::vector<std::pair<Offset, double>> half;
  const int zr = dim >= 3 ? 1 : 0;
  const int yr = dim >= 2 ? 1 : 0;
  for (int dz = -zr; dz <= zr; ++dz)
    for (int dy = -yr; dy <= yr; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const Offset o{dz, dy, dx};
        // Keep one representative per {o, -o} pair: first non-zero component positive.
        const int first = dz != 0 ? dz : (dy != 0 ? dy : dx);
        if (first <= 0) continue;
        const int l1 = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (l1 == 1 || uniform(rng, 0, 1) < 0.5) half.push_back({o, uniform(rng, 0.2, 1.0)});
      }
  return make_symmetric_mask(half);
}

inline std::vector<Index> random_dims(Rng& rng, int dim) {
  switch (dim) {
    case 1: return {static_cast<Index>(uniform_int(rng, 2, 64))};
    case 2: return {static_cast<Index>(uniform_int(rng, 2, 8)), static_cast<Index>(uniform_int(rng, 2, 8))};
    default:
      return {static_cast<Index>(uniform_int(rng, 2, 4)), static_cast<Index>(uniform_int(rng, 2, 4)),
              static_cast<Index>(uniform_int(rng, 2, 4))};
  }
}

/// Image with a negative fraction drawn from [min_neg, max_neg] (at least
/// one negative voxel) and a non-negative sum: negatives are scaled down if
/// needed so the total stays >= 0.
inline Volume random_feasible_image(Rng& rng, const std::vector<Index>& dims, double min_neg = 0.1, double max_neg = 0.6) {
  const Index n = dims_product(dims);
  std::vector<double> v(n);
  for (auto& e : v) e = uniform(rng, 0.0, 10.0);
  const double frac = uniform(rng, min_neg, max_neg);
  const Index k = std::clamp<Index>(static_cast<Index>(std::lround(frac * static_cast<double>(n))), 1, n - 1);
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  for (Index j = 0; j < k; ++j) v[idx[j]] = -uniform(rng, 0.1, 10.0);
  double pos = 0.0;
  double neg = 0.0;
  for (double e : v) (e > 0 ? pos : neg) += e;
  const double keep = uniform(rng, 0.05, 0.95);  // surplus left after the negatives
  if (-neg > pos * (1.0 - keep))
    for (Index j = 0; j < k; ++j) v[idx[j]] *= pos * (1.0 - keep) / -neg;
  return Volume(dims, v);
}

/// Image with a strictly negative sum.
inline Volume random_infeasible_image(Rng& rng, const std::vector<Index>& dims) {
  const Index n = dims_product(dims);
  std::vector<double> v(n);
  for (auto& e : v) e = uniform(rng, -10.0, 10.0);
  const double s = sum(v);
  const double shift = (s >= 0 ? s : 0.0) / static_cast<double>(n) + uniform(rng, 0.01, 1.0);
  for (auto& e : v) e -= shift;
  return Volume(dims, v);
}

/// Image with sum exactly zero in floating point: values are multiples of
/// 1/8 (exactly representable), made zero-sum by adjusting one voxel.
inline Volume random_zero_mean_image(Rng& rng, const std::vector<Index>& dims) {
  const Index n = dims_product(dims);
  std::vector<double> v(n);
  for (auto& e : v) e = uniform_int(rng, -80, 80) / 8.0;
  double s = 0.0;
  for (Index i = 1; i < n; ++i) s += v[i];
  v[0] = -s;
  return Volume(dims, v);
}

inline SweepOrder random_order(Rng& rng, Index n) {
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return SweepOrder::custom(std::move(perm));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (Index i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// max_i alpha_i * max(y_i, 0) / max(alpha_i, 1), the complementarity defect.
inline double complementarity_defect(std::span<const double> alpha, std::span<const double> y) {
  double worst = 0.0;
  for (Index i = 0; i < alpha.size(); ++i) worst = std::max(worst, alpha[i] * std::max(y[i], 0.0) / std::max(alpha[i], 1.0));
  return worst;
}

/// |sum(y) - sum(x)| / (sum|x| + sum(alpha)).
inline double relative_mean_change(const Volume& x, const SolverResult& r) {
  return std::abs(sum(r.y) - sum(x)) / (abs_sum(x.data()) + sum(r.alpha.data));
}

/// Feasible, non-optimal transfer map near `alpha`: extra transfer on voxels
/// whose donating neighbors all have slack in y = x + H alpha, scaled so y
/// stays non-negative. Returns alpha unchanged when no voxel qualifies.
inline std::vector<double> perturbed_feasible_start(Rng& rng, const DenseMatrix& h, const std::vector<double>& x,
                                                    std::vector<double> alpha) {
  auto y = h.multiply(alpha);
  for (Index r = 0; r < y.size(); ++r) y[r] += x[r];
  const double floor = 1e-6 * max_abs(x);  // oracle zeros carry rounding noise
  std::vector<double> u(alpha.size(), 0.0);
  for (Index c = 0; c < h.cols; ++c) {
    bool slack = true;
    for (Index r = 0; r < h.rows; ++r)
      if (h(r, c) < 0.0 && !(y[r] > floor)) slack = false;
    if (slack) u[c] = uniform(rng, 0.5, 1.0);
  }
  const auto hu = h.multiply(u);
  double eps = std::numeric_limits<double>::infinity();
  for (Index r = 0; r < hu.size(); ++r)
    if (hu[r] < 0.0) eps = std::min(eps, std::max(y[r], 0.0) / -hu[r]);
  if (!std::isfinite(eps)) eps = 1.0;
  for (Index c = 0; c < alpha.size(); ++c) alpha[c] += 0.5 * eps * u[c];
  return alpha;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("nnepps_" + tag + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace nnepps::testing
