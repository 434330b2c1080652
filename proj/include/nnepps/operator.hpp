#pragma once

// The transfer operator H: each voxel's transfer coefficient is scattered
// through the (boundary-completed) spread mask centred on that voxel, so
// column i of H is the effective mask of voxel i laid onto the grid. Every
// column sums to zero, hence sum(x + H alpha) == sum(x).

#include <cstdint>
#include <span>
#include <vector>

#include "nnepps/errors.hpp"
#include "nnepps/grid.hpp"
#include "nnepps/spread.hpp"

namespace nnepps {

/// Non-negative transfer coefficients, one per voxel.
struct TransferMap {
  std::vector<Index> dims;
  std::vector<double> data;

  TransferMap() = default;
  explicit TransferMap(std::vector<Index> d) : dims(std::move(d)), data(dims_product(dims), 0.0) {}
  TransferMap(std::vector<Index> d, std::vector<double> values) : dims(std::move(d)), data(std::move(values)) { validate(); }

  void validate() const {
    check_dims(dims);
    if (data.size() != dims_product(dims)) throw ValidationError("transfer map size does not match dims");
    for (double a : data)
      if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("transfer coefficients must be finite and non-negative");
  }
};

/// A spread mask bound to a grid extent: flat tap offsets plus a per-voxel
/// boundary flag, so the hot loop never re-derives effective masks.
///
/// Scatter order contract: taps are applied in mask order, each as
/// `y[i + offset] += delta * effective_weight`. The effective weight of a
/// neighbor tap at a boundary voxel is `weight * (1 / kept)`, where `kept`
/// is the sum of |weight| over in-grid neighbor taps accumulated in mask
/// order; this is bit-identical to effective_mask_at.
class CompiledStencil {
public:
  struct FlatTap {
    Offset offset;
    std::ptrdiff_t flat;
    double weight;
    bool center;
  };

  CompiledStencil(const SpreadMask& mask, std::span<const Index> dims, BoundaryPolicy policy)
      : extent_(Extent::from_dims(dims)), policy_(policy), reach_(mask.reach()) {
    require_valid(mask);
    for (const auto& t : mask.taps) {
      const std::ptrdiff_t flat =
          (static_cast<std::ptrdiff_t>(t.offset[0]) * static_cast<std::ptrdiff_t>(extent_.n[1]) + t.offset[1]) *
              static_cast<std::ptrdiff_t>(extent_.n[2]) +
          t.offset[2];
      taps_.push_back({t.offset, flat, t.weight, t.offset == Offset{0, 0, 0}});
    }
    boundary_.resize(extent_.size());
    for (Index i = 0; i < extent_.size(); ++i) boundary_[i] = !interior_coords(extent_.coords(i));
  }

  const Extent& extent() const { return extent_; }
  Index size() const { return extent_.size(); }
  BoundaryPolicy policy() const { return policy_; }
  std::span<const FlatTap> taps() const { return taps_; }
  std::array<int, 3> reach() const { return reach_; }
  bool is_boundary(Index i) const { return boundary_[i] != 0; }

  /// Sum of |weight| over the in-grid neighbor taps of voxel i; the
  /// effective neighbor weights at i are weight / kept. Exactly 1 inside.
  double kept_weight(Index i) const {
    if (!boundary_[i]) return 1.0;
    const auto c = extent_.coords(i);
    double kept = 0.0;
    for (const auto& t : taps_)
      if (!t.center && extent_.contains({c[0] + t.offset[0], c[1] + t.offset[1], c[2] + t.offset[2]})) kept -= t.weight;
    return kept;
  }

  /// Calls f(j, weight) for every in-grid neighbor j of voxel i, with the
  /// raw (unrescaled) mask weight of the tap j - i.
  template <class F>
  void for_each_neighbor(Index i, F&& f) const {
    if (!boundary_[i]) {
      for (const auto& t : taps_)
        if (!t.center) f(static_cast<Index>(static_cast<std::ptrdiff_t>(i) + t.flat), t.weight);
      return;
    }
    const auto c = extent_.coords(i);
    for (const auto& t : taps_) {
      if (t.center) continue;
      const std::array<std::ptrdiff_t, 3> p{c[0] + t.offset[0], c[1] + t.offset[1], c[2] + t.offset[2]};
      if (extent_.contains(p)) f(extent_.flat(p), t.weight);
    }
  }

  /// y += delta * (effective mask of voxel i).
  void scatter(std::span<double> y, Index i, double delta) const {
    if (!boundary_[i]) {
      double* base = y.data() + i;
      for (const auto& t : taps_) base[t.flat] += delta * t.weight;
      return;
    }
    scatter_boundary(y, i, delta);
  }

private:
  bool interior_coords(const std::array<std::ptrdiff_t, 3>& c) const {
    for (int a = 0; a < 3; ++a)
      if (c[a] < reach_[a] || c[a] >= static_cast<std::ptrdiff_t>(extent_.n[a]) - reach_[a]) return false;
    return true;
  }

  void scatter_boundary(std::span<double> y, Index i, double delta) const {
    if (policy_ == BoundaryPolicy::reject)
      throw BoundaryError("mask leaves the grid at voxel " + std::to_string(i) + " (boundary policy: reject)");
    const auto c = extent_.coords(i);
    auto inside = [&](const FlatTap& t) {
      return extent_.contains({c[0] + t.offset[0], c[1] + t.offset[1], c[2] + t.offset[2]});
    };
    double kept = 0.0;
    for (const auto& t : taps_)
      if (!t.center && inside(t)) kept -= t.weight;
    if (!(kept > 0.0)) throw BoundaryError("voxel " + std::to_string(i) + " has no in-grid neighbor to spread to");
    const double scale = 1.0 / kept;
    for (const auto& t : taps_) {
      if (!inside(t)) continue;
      const double w = t.center ? t.weight : t.weight * scale;
      y[static_cast<Index>(static_cast<std::ptrdiff_t>(i) + t.flat)] += delta * w;
    }
  }

  Extent extent_;
  BoundaryPolicy policy_;
  std::array<int, 3> reach_;
  std::vector<FlatTap> taps_;
  std::vector<std::uint8_t> boundary_;
};

/// In-place single-site transfer: y[index] rises by delta, its in-grid
/// neighbors fall by delta times their effective weights.
inline void scatter_site(Volume& y, const SpreadMask& m, Index index, double delta, BoundaryPolicy policy) {
  if (index >= y.size()) throw ValidationError("voxel index out of bounds");
  if (!(delta >= 0.0)) throw ValidationError("transfer delta must be non-negative");
  if (delta == 0.0) return;
  const SpreadMask eff = effective_mask_at(m, y.dims(), index, policy);
  const Extent e = y.extent();
  const auto c = e.coords(index);
  for (const auto& t : eff.taps)
    y[e.flat({c[0] + t.offset[0], c[1] + t.offset[1], c[2] + t.offset[2]})] += delta * t.weight;
}

/// H alpha, computed as scatter of every alpha[i] (in increasing i) onto a
/// zero volume. Zero coefficients are skipped, so `reject` only fails when a
/// boundary voxel carries a positive transfer.
inline Volume apply(const CompiledStencil& stencil, const TransferMap& alpha) {
  alpha.validate();
  if (dims_product(alpha.dims) != stencil.size()) throw ValidationError("transfer map does not match the stencil grid");
  Volume out = Volume::zeros(alpha.dims);
  auto y = out.mutable_data();
  for (Index i = 0; i < alpha.data.size(); ++i)
    if (alpha.data[i] != 0.0) stencil.scatter(y, i, alpha.data[i]);
  return out;
}

inline Volume apply(const SpreadMask& m, const TransferMap& alpha, BoundaryPolicy policy) {
  return apply(CompiledStencil(m, alpha.dims, policy), alpha);
}

/// Row-major dense matrix, for the small-instance oracle only.
struct DenseMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<double> values;

  double operator()(Index r, Index c) const { return values[r * cols + c]; }
  double& operator()(Index r, Index c) { return values[r * cols + c]; }

  std::vector<double> multiply(std::span<const double> v) const {
    std::vector<double> out(rows, 0.0);
    for (Index r = 0; r < rows; ++r) {
      double s = 0.0;
      for (Index c = 0; c < cols; ++c) s += (*this)(r, c) * v[c];
      out[r] = s;
    }
    return out;
  }
};

inline constexpr Index kDenseVoxelCap = 4096;

/// Explicit H on a small grid: column i is effective_mask_at(i) laid onto
/// the grid. Under `reject`, any boundary voxel makes assembly fail.
inline DenseMatrix assemble_dense(const SpreadMask& m, std::span<const Index> dims, BoundaryPolicy policy) {
  require_valid(m);
  const Extent e = Extent::from_dims(dims);
  const Index n = e.size();
  if (n > kDenseVoxelCap) throw SizeLimitError("dense assembly limited to " + std::to_string(kDenseVoxelCap) + " voxels");
  DenseMatrix h{n, n, std::vector<double>(n * n, 0.0)};
  for (Index i = 0; i < n; ++i) {
    const SpreadMask eff = effective_mask_at(m, dims, i, policy);
    const auto c = e.coords(i);
    for (const auto& t : eff.taps) h(e.flat({c[0] + t.offset[0], c[1] + t.offset[1], c[2] + t.offset[2]}), i) += t.weight;
  }
  return h;
}

}  // namespace nnepps
