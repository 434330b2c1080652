#pragma once

// Regional bias/RMSE and radial activity profiles, with CSV output.
//
// CSV columns (stable):
//   region statistics: region,count,truth,mean,bias,rmse
//   radial profile:    radius,mean,count

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nnepps/errors.hpp"
#include "nnepps/grid.hpp"
#include "nnepps/phantom.hpp"

namespace nnepps {

struct BiasRmse {
  double mean_bias = 0.0;
  double rmse = 0.0;
};

inline BiasRmse bias_rmse(const Volume& v, const Region& region, double truth) {
  const auto st = region_stats(v, region, truth);
  return {st.mean - truth, st.rmse};
}

enum class ProfileMode { radial_from_axis, radial_from_point };

struct ProfileSpec {
  Point3 center{};  // voxel coordinates (z, y, x)
  ProfileMode mode = ProfileMode::radial_from_axis;
  int axis = 0;  // radial_from_axis only
  double bin_width = 1.0;
  double max_radius = std::numeric_limits<double>::infinity();
  bool physical_units = false;  // scale coordinate differences by the volume spacing

  void validate() const {
    if (!(bin_width > 0.0)) throw ValidationError("profile bin width must be positive");
    if (!(max_radius > 0.0)) throw ValidationError("profile max radius must be positive");
    if (axis < 0 || axis > 2) throw ValidationError("profile axis must be 0, 1 or 2");
  }
};

struct ProfileBin {
  double radius = 0.0;  // bin center
  double mean = 0.0;
  Index count = 0;
};

/// Voxels at distance d < max_radius fall in bin floor(d / bin_width). Bins
/// holding no voxel are omitted. Optionally restricted to a region.
inline std::vector<ProfileBin> radial_profile(const Volume& v, const ProfileSpec& p, const Region* restrict_to = nullptr) {
  p.validate();
  const Extent e = v.extent();
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  if (p.physical_units) {
    const std::size_t pad = 3 - v.spacing().size();
    for (std::size_t a = 0; a < v.spacing().size(); ++a) scale[pad + a] = v.spacing()[a];
  }
  std::map<Index, std::pair<CompensatedSum, Index>> bins;
  auto add = [&](Index i) {
    const auto c = e.coords(i);
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      if (p.mode == ProfileMode::radial_from_axis && a == p.axis) continue;
      const double d = (static_cast<double>(c[a]) - p.center[a]) * scale[a];
      d2 += d * d;
    }
    const double d = std::sqrt(d2);
    if (!(d < p.max_radius)) return;
    auto& [acc, count] = bins[static_cast<Index>(std::floor(d / p.bin_width))];
    acc.add(v[i]);
    ++count;
  };
  if (restrict_to) {
    restrict_to->validate(v.size());
    for (Index i : restrict_to->indices) add(i);
  } else {
    for (Index i = 0; i < v.size(); ++i) add(i);
  }
  std::vector<ProfileBin> out;
  for (const auto& [k, b] : bins)
    out.push_back({(static_cast<double>(k) + 0.5) * p.bin_width, b.first.value() / static_cast<double>(b.second), b.second});
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

inline void write_profile_csv(std::ostream& out, const std::vector<ProfileBin>& bins) {
  out << "radius,mean,count\n";
  for (const auto& b : bins) out << format_double(b.radius) << ',' << format_double(b.mean) << ',' << b.count << '\n';
}

struct RegionMetricRow {
  std::string region;
  Index count = 0;
  double truth = 0.0;
  double mean = 0.0;
  BiasRmse stats;
};

inline void write_region_csv(std::ostream& out, const std::vector<RegionMetricRow>& rows) {
  out << "region,count,truth,mean,bias,rmse\n";
  for (const auto& r : rows)
    out << r.region << ',' << r.count << ',' << format_double(r.truth) << ',' << format_double(r.mean) << ','
        << format_double(r.stats.mean_bias) << ',' << format_double(r.stats.rmse) << '\n';
}

inline std::vector<RegionMetricRow> region_metrics(const Volume& v, const std::vector<Region>& regions,
                                                   const std::map<std::string, double>& truths) {
  std::vector<RegionMetricRow> rows;
  for (const auto& r : regions) {
    if (r.indices.empty()) continue;
    auto it = truths.find(r.name);
    const double truth = it != truths.end() ? it->second : 0.0;
    const auto st = region_stats(v, r, truth);
    rows.push_back({r.name, st.count, truth, st.mean, {st.mean - truth, st.rmse}});
  }
  return rows;
}

}  // namespace nnepps
