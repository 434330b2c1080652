#pragma once

// Voxel spread functions: symmetric zero-sum elementary masks.
//
// A mask is a list of taps (dz, dy, dx, weight). The zero-offset tap carries
// weight 1; every other tap carries a non-positive weight; the weights sum
// to 0; and the tap set is point-symmetric. Offsets are always given as
// 3-tuples; a 1D or 2D mask simply has dz (and dy) equal to zero, and is
// applied along the trailing axes of the volume.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nnepps/errors.hpp"
#include "nnepps/grid.hpp"

namespace nnepps {

using Offset = std::array<int, 3>;  // {dz, dy, dx}

struct Tap {
  Offset offset{0, 0, 0};
  double weight = 0.0;

  friend bool operator==(const Tap&, const Tap&) = default;
};

struct SpreadMask {
  std::vector<Tap> taps;

  double center_weight() const {
    for (const auto& t : taps)
      if (t.offset == Offset{0, 0, 0}) return t.weight;
    return 0.0;
  }

  /// Largest |offset| along each axis.
  std::array<int, 3> reach() const {
    std::array<int, 3> r{0, 0, 0};
    for (const auto& t : taps)
      for (int a = 0; a < 3; ++a) r[a] = std::max(r[a], std::abs(t.offset[a]));
    return r;
  }

  friend bool operator==(const SpreadMask&, const SpreadMask&) = default;
};

enum class BoundaryPolicy { renormalize, reject };

inline BoundaryPolicy parse_boundary_policy(std::string_view s) {
  if (s == "renormalize") return BoundaryPolicy::renormalize;
  if (s == "reject") return BoundaryPolicy::reject;
  throw ValidationError("unknown boundary policy '" + std::string(s) + "'");
}

inline std::string to_string(BoundaryPolicy p) { return p == BoundaryPolicy::renormalize ? "renormalize" : "reject"; }

inline constexpr double kMaskSumTolerance = 1e-15;

/// Names accepted by make_preset.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"1d-2", "2d-4", "2d-8", "3d-6", "3d-18", "3d-26"};
  return names;
}

/// Equal-share isotropic masks: center 1, each of the k neighbors -1/k.
/// Neighborhoods are named by dimension and neighbor count; 3d-18 is faces
/// plus edges, 3d-26 the full 3x3x3 cube.
inline SpreadMask make_preset(std::string_view name) {
  int dim = 0;
  int max_l1 = 0;  // largest Manhattan norm of an included offset
  if (name == "1d-2") {
    dim = 1, max_l1 = 1;
  } else if (name == "2d-4") {
    dim = 2, max_l1 = 1;
  } else if (name == "2d-8") {
    dim = 2, max_l1 = 2;
  } else if (name == "3d-6") {
    dim = 3, max_l1 = 1;
  } else if (name == "3d-18") {
    dim = 3, max_l1 = 2;
  } else if (name == "3d-26") {
    dim = 3, max_l1 = 3;
  } else {
    throw ValidationError("unknown mask preset '" + std::string(name) + "'");
  }
  std::vector<Offset> neighbors;
  const int zr = dim >= 3 ? 1 : 0;
  const int yr = dim >= 2 ? 1 : 0;
  for (int dz = -zr; dz <= zr; ++dz)
    for (int dy = -yr; dy <= yr; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int l1 = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (l1 > 0 && l1 <= max_l1) neighbors.push_back({dz, dy, dx});
      }
  SpreadMask m;
  m.taps.push_back({{0, 0, 0}, 1.0});
  const double w = -1.0 / static_cast<double>(neighbors.size());
  for (const auto& o : neighbors) m.taps.push_back({o, w});
  return m;
}

enum class ViolationKind { non_finite, missing_center, duplicate_offset, center_not_one, positive_neighbor, not_zero_sum, asymmetric };

struct Violation {
  ViolationKind kind;
  std::string message;
  double residual = 0.0;  // offending value, when one applies
};

inline std::string to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::non_finite: return "non-finite";
    case ViolationKind::missing_center: return "missing-center";
    case ViolationKind::duplicate_offset: return "duplicate-offset";
    case ViolationKind::center_not_one: return "center-not-one";
    case ViolationKind::positive_neighbor: return "positive-neighbor";
    case ViolationKind::not_zero_sum: return "zero-sum";
    case ViolationKind::asymmetric: return "symmetry";
  }
  return "unknown";
}

inline std::string offset_string(const Offset& o) {
  return "(" + std::to_string(o[0]) + "," + std::to_string(o[1]) + "," + std::to_string(o[2]) + ")";
}

/// Every invariant violation of the mask; empty means valid.
inline std::vector<Violation> validate(const SpreadMask& m) {
  std::vector<Violation> out;
  std::vector<double> weights;
  int centers = 0;
  for (std::size_t k = 0; k < m.taps.size(); ++k) {
    const auto& t = m.taps[k];
    weights.push_back(t.weight);
    if (!std::isfinite(t.weight)) {
      out.push_back({ViolationKind::non_finite, "tap " + offset_string(t.offset) + " has a non-finite weight", t.weight});
      continue;
    }
    for (std::size_t j = 0; j < k; ++j)
      if (m.taps[j].offset == t.offset)
        out.push_back({ViolationKind::duplicate_offset, "offset " + offset_string(t.offset) + " appears more than once", 0.0});
    if (t.offset == Offset{0, 0, 0}) {
      ++centers;
      if (t.weight != 1.0)
        out.push_back({ViolationKind::center_not_one, "center weight must be 1", t.weight});
    } else if (t.weight > 0.0) {
      out.push_back({ViolationKind::positive_neighbor, "neighbor " + offset_string(t.offset) + " has positive weight", t.weight});
    }
    bool mirrored = false;
    const Offset neg{-t.offset[0], -t.offset[1], -t.offset[2]};
    for (const auto& u : m.taps)
      if (u.offset == neg && std::abs(u.weight - t.weight) <= kMaskSumTolerance) mirrored = true;
    if (!mirrored)
      out.push_back({ViolationKind::asymmetric,
                     "offset " + offset_string(t.offset) + " has no mirror " + offset_string(neg) + " with equal weight",
                     t.weight});
  }
  if (centers == 0) out.push_back({ViolationKind::missing_center, "mask has no zero-offset tap", 0.0});
  const double s = sum(weights);
  if (std::isfinite(s) && std::abs(s) > kMaskSumTolerance)
    out.push_back({ViolationKind::not_zero_sum, "weights sum to " + std::to_string(s) + " instead of 0", s});
  return out;
}

inline void require_valid(const SpreadMask& m) {
  const auto v = validate(m);
  if (v.empty()) return;
  std::string msg = "invalid spread mask:";
  for (const auto& x : v) msg += "\n  " + to_string(x.kind) + ": " + x.message;
  throw ValidationError(msg);
}

/// Builds a valid mask from symmetric neighbor pairs with arbitrary positive
/// relative strengths. Only one of each pair {o, -o} is given; the negative
/// weights are scaled so the mask sums exactly to zero.
inline SpreadMask make_symmetric_mask(const std::vector<std::pair<Offset, double>>& half) {
  double total = 0.0;
  for (const auto& [o, s] : half) {
    if (!(s > 0.0)) throw ValidationError("pair strengths must be positive");
    if (o == Offset{0, 0, 0}) throw ValidationError("zero offset is implicit");
    total += 2.0 * s;
  }
  SpreadMask m;
  m.taps.push_back({{0, 0, 0}, 1.0});
  for (const auto& [o, s] : half) {
    const double w = -s / total;
    m.taps.push_back({o, w});
    m.taps.push_back({{-o[0], -o[1], -o[2]}, w});
  }
  // Absorb the rounding residual into the largest pair, keeping symmetry.
  std::vector<double> weights;
  for (const auto& t : m.taps) weights.push_back(t.weight);
  const double residual = sum(weights);
  if (residual != 0.0 && m.taps.size() > 1) {
    std::size_t big = 1;
    for (std::size_t k = 1; k < m.taps.size(); k += 2)
      if (m.taps[k].weight < m.taps[big].weight) big = k;
    m.taps[big].weight -= residual / 2;
    m.taps[big + 1].weight = m.taps[big].weight;
  }
  require_valid(m);
  return m;
}

/// The mask actually used at a voxel. Under `renormalize`, taps that fall
/// outside the grid are dropped and the remaining neighbor weights share a
/// common rescale so the mask sums to 0 again (center stays 1). Under
/// `reject`, any out-of-grid tap is a BoundaryError. Interior voxels get the
/// input mask back unchanged.
inline SpreadMask effective_mask_at(const SpreadMask& m, std::span<const Index> dims, Index index, BoundaryPolicy policy) {
  const Extent e = Extent::from_dims(dims);
  if (index >= e.size()) throw ValidationError("voxel index " + std::to_string(index) + " out of bounds");
  const auto c = e.coords(index);
  SpreadMask out;
  double kept_negative = 0.0;
  bool dropped = false;
  for (const auto& t : m.taps) {
    const std::array<std::ptrdiff_t, 3> p{c[0] + t.offset[0], c[1] + t.offset[1], c[2] + t.offset[2]};
    if (!e.contains(p)) {
      if (policy == BoundaryPolicy::reject)
        throw BoundaryError("mask tap " + offset_string(t.offset) + " leaves the grid at voxel " + std::to_string(index));
      dropped = true;
      continue;
    }
    out.taps.push_back(t);
    if (t.offset != Offset{0, 0, 0}) kept_negative -= t.weight;
  }
  if (!dropped) return m;
  if (!(kept_negative > 0.0))
    throw BoundaryError("voxel " + std::to_string(index) + " has no in-grid neighbor to spread to");
  const double scale = 1.0 / kept_negative;
  for (auto& t : out.taps)
    if (t.offset != Offset{0, 0, 0}) t.weight *= scale;
  return out;
}

/// Text mask: one tap per line, "dz dy dx weight"; '#' starts a comment.
/// The result is parsed but not validated; call validate() on it.
inline SpreadMask parse_mask_text(const std::string& text) {
  SpreadMask m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    ls.seekg(0);
    Tap t;
    std::string extra;
    if (!(ls >> t.offset[0] >> t.offset[1] >> t.offset[2] >> t.weight) || (ls >> extra))
      throw IoError("mask line " + std::to_string(lineno) + ": expected 'dz dy dx weight'");
    m.taps.push_back(t);
  }
  if (m.taps.empty()) throw IoError("mask file has no taps");
  return m;
}

inline SpreadMask read_mask_file(const std::filesystem::path& path) { return parse_mask_text(read_text(path)); }

inline std::string format_mask_text(const SpreadMask& m) {
  std::ostringstream out;
  out.precision(17);
  out << "# dz dy dx weight\n";
  for (const auto& t : m.taps) out << t.offset[0] << ' ' << t.offset[1] << ' ' << t.offset[2] << ' ' << t.weight << '\n';
  return out.str();
}

/// Preset name or path to a mask text file.
inline SpreadMask load_mask(const std::string& preset_or_path) {
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), preset_or_path) != names.end()) return make_preset(preset_or_path);
  return read_mask_file(preset_or_path);
}

}  // namespace nnepps
