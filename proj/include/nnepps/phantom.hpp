#pragma once

// Synthetic hot/warm/cold phantoms and a counter-based Gaussian noise
// injector standing in for unconstrained reconstruction noise.
//
// Geometry is in voxel coordinates (z, y, x); a voxel belongs to a shape
// when its center (the integer index triple) lies inside it.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "nnepps/errors.hpp"
#include "nnepps/grid.hpp"

namespace nnepps {

using Point3 = std::array<double, 3>;  // (z, y, x)

struct Sphere {
  Point3 center{};
  double radius = 0.0;
};

/// Circular cylinder along one axis, spanning |coord[axis] - center[axis]| <= half_length.
struct Cylinder {
  Point3 center{};
  double radius = 0.0;
  int axis = 0;
  double half_length = std::numeric_limits<double>::infinity();

  double radial_distance(const Point3& p) const {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a)
      if (a != axis) d2 += (p[a] - center[a]) * (p[a] - center[a]);
    return std::sqrt(d2);
  }
  bool contains(const Point3& p) const {
    return std::abs(p[axis] - center[axis]) <= half_length && radial_distance(p) <= radius;
  }
};

struct PhantomSpec {
  std::vector<Index> dims{128, 128, 128};
  std::vector<double> spacing{};
  double background_activity = 177e3;
  double sphere_activity = 1.33e6;
  std::vector<Sphere> spheres;
  Cylinder cold_cylinder;
  Cylinder body;
  std::string units = "Bq/mL";
};

/// Labels used in the phantom label volume.
enum class PhantomLabel : int { outside = 0, cold = 1, warm = 2, spheres = 3 };

inline const char* label_name(PhantomLabel l) {
  switch (l) {
    case PhantomLabel::outside: return "outside";
    case PhantomLabel::cold: return "cold";
    case PhantomLabel::warm: return "warm";
    case PhantomLabel::spheres: return "spheres";
  }
  return "unknown";
}

/// Generic hot/warm/cold layout, scaled from a 128-voxel reference: a body
/// cylinder of radius 63 along z, a cold cylinder of radius 12 on the body
/// axis, and six spheres (radii 3, 4, 5, 6, 7, 9) on a ring of radius 36 in
/// the central z slice. This is not a reproduction of any specific scanner
/// phantom.
inline PhantomSpec default_phantom_spec(std::vector<Index> dims = {128, 128, 128}) {
  check_dims(dims);
  if (dims.size() != 3) throw ValidationError("phantom dims must have 3 axes");
  PhantomSpec s;
  s.dims = dims;
  const double scale = static_cast<double>(std::min(dims[1], dims[2])) / 128.0;
  const Point3 c{(dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0};
  s.body = {c, 63.0 * scale, 0, dims[0] / 2.0};
  s.cold_cylinder = {c, 12.0 * scale, 0, dims[0] / 2.0};
  const double radii[6] = {3, 4, 5, 6, 7, 9};
  for (int k = 0; k < 6; ++k) {
    const double angle = k * std::numbers::pi / 3.0;
    s.spheres.push_back({{c[0], c[1] + 36.0 * scale * std::sin(angle), c[2] + 36.0 * scale * std::cos(angle)}, radii[k] * scale});
  }
  return s;
}

inline double distance(const Point3& a, const Point3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

/// Geometry checks: non-negative activities, centers inside the grid,
/// spheres and cold cylinder inside the body cross-section, and no overlap
/// between any two hot/cold shapes. Zero-radius spheres are ignored.
inline void validate(const PhantomSpec& s) {
  check_dims(s.dims);
  if (s.dims.size() != 3) throw ValidationError("phantom dims must have 3 axes");
  if (!(s.background_activity >= 0.0) || !(s.sphere_activity >= 0.0)) throw ValidationError("activities must be non-negative");
  auto in_grid = [&](const Point3& p) {
    for (int a = 0; a < 3; ++a)
      if (p[a] < -0.5 || p[a] > static_cast<double>(s.dims[a]) - 0.5) return false;
    return true;
  };
  for (const auto* cyl : {&s.body, &s.cold_cylinder}) {
    if (cyl->axis < 0 || cyl->axis > 2) throw ValidationError("cylinder axis must be 0, 1 or 2");
    if (!(cyl->radius >= 0.0) || !(cyl->half_length >= 0.0)) throw ValidationError("cylinder sizes must be non-negative");
    if (!in_grid(cyl->center)) throw ValidationError("cylinder center outside the grid");
  }
  if (s.cold_cylinder.axis != s.body.axis) throw ValidationError("cold cylinder must be parallel to the body axis");
  if (s.cold_cylinder.radial_distance(s.body.center) + s.cold_cylinder.radius > s.body.radius)
    throw ValidationError("cold cylinder extends outside the body");
  std::vector<const Sphere*> live;
  for (const auto& sp : s.spheres) {
    if (!(sp.radius >= 0.0)) throw ValidationError("sphere radius must be non-negative");
    if (sp.radius == 0.0) continue;
    if (!in_grid(sp.center)) throw ValidationError("sphere center outside the grid");
    if (s.body.radial_distance(sp.center) + sp.radius > s.body.radius) throw ValidationError("sphere extends outside the body");
    if (std::abs(sp.center[s.cold_cylinder.axis] - s.cold_cylinder.center[s.cold_cylinder.axis]) <
            s.cold_cylinder.half_length + sp.radius &&
        s.cold_cylinder.radial_distance(sp.center) < s.cold_cylinder.radius + sp.radius)
      throw ValidationError("sphere overlaps the cold cylinder");
    for (const auto* other : live)
      if (distance(other->center, sp.center) < other->radius + sp.radius) throw ValidationError("spheres overlap");
    live.push_back(&sp);
  }
}

struct Phantom {
  Volume volume;
  Volume labels;                // PhantomLabel per voxel
  std::vector<Region> regions;  // non-empty regions among outside, cold, warm, spheres
};

inline Phantom make_phantom(const PhantomSpec& s) {
  validate(s);
  Volume v = Volume::zeros(s.dims, s.spacing, s.units);
  Volume labels = Volume::zeros(s.dims, s.spacing);
  const Extent e = v.extent();
  std::array<Region, 4> regions{Region{"outside", {}}, Region{"cold", {}}, Region{"warm", {}}, Region{"spheres", {}}};
  for (Index i = 0; i < e.size(); ++i) {
    const auto c = e.coords(i);
    const Point3 p{static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2])};
    PhantomLabel l = PhantomLabel::outside;
    double value = 0.0;
    if (s.body.contains(p)) {
      if (s.cold_cylinder.contains(p)) {
        l = PhantomLabel::cold;
      } else {
        l = PhantomLabel::warm;
        value = s.background_activity;
        for (const auto& sp : s.spheres)
          if (sp.radius > 0.0 && distance(sp.center, p) <= sp.radius) {
            l = PhantomLabel::spheres;
            value = s.sphere_activity;
            break;
          }
      }
    }
    v[i] = value;
    labels[i] = static_cast<int>(l);
    regions[static_cast<int>(l)].indices.push_back(i);
  }
  Phantom out{std::move(v), std::move(labels), {}};
  for (auto& r : regions)
    if (!r.indices.empty()) out.regions.push_back(std::move(r));
  return out;
}

inline const Region* find_region(const std::vector<Region>& regions, std::string_view name) {
  for (const auto& r : regions)
    if (r.name == name) return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Noise
//
// Voxel i receives sigma * n_i with n_i standard normal, computed from the
// counter pair (2i, 2i + 1) alone:
//   u_k = splitmix64(seed + (c_k + 1) * 0x9E3779B97F4A7C15)   (c_0 = 2i, c_1 = 2i + 1)
//   a = ((u_0 >> 11) + 1) * 2^-53   in (0, 1]
//   b = (u_1 >> 11) * 2^-53         in [0, 1)
//   n_i = sqrt(-2 ln a) * cos(2 pi b)                          (Box-Muller)
// so any voxel's noise can be generated independently and in any order.

struct NoiseSpec {
  std::string kind = "gaussian";
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64_mix(seed + (counter + 1) * 0x9E3779B97F4A7C15ull);
}

inline double standard_normal_at(std::uint64_t seed, Index i) {
  constexpr double two_pow_m53 = 1.0 / 9007199254740992.0;
  const double a = static_cast<double>((counter_bits(seed, 2 * i) >> 11) + 1) * two_pow_m53;
  const double b = static_cast<double>(counter_bits(seed, 2 * i + 1) >> 11) * two_pow_m53;
  return std::sqrt(-2.0 * std::log(a)) * std::cos(2.0 * std::numbers::pi * b);
}

inline Volume add_noise(const Volume& v, const NoiseSpec& n) {
  if (n.kind != "gaussian") throw ValidationError("unsupported noise kind '" + n.kind + "'");
  if (!(n.sigma >= 0.0) || !std::isfinite(n.sigma)) throw ValidationError("noise sigma must be finite and non-negative");
  Volume out = v;
  if (n.sigma == 0.0) return out;
  for (Index i = 0; i < out.size(); ++i) out[i] += n.sigma * standard_normal_at(n.seed, i);
  return out;
}

// ---------------------------------------------------------------------------
// JSON configuration
//
// Phantom document (every key optional; missing keys keep the defaults of
// default_phantom_spec(dims)):
//   {"dims": [nz, ny, nx], "spacing": [..], "units": "Bq/mL",
//    "background_activity": 177000, "sphere_activity": 1330000,
//    "spheres": [{"center": [z, y, x], "radius": r}, ...],
//    "cold_cylinder": {"center": [z, y, x], "radius": r, "axis": 0, "half_length": h},
//    "body": {"center": [z, y, x], "radius": r, "axis": 0, "half_length": h}}
// Noise document: {"kind": "gaussian", "sigma": 50000, "seed": 1}

inline Cylinder cylinder_from_json(const nlohmann::json& j, Cylinder c) {
  if (j.contains("center")) c.center = j.at("center").get<Point3>();
  c.radius = j.value("radius", c.radius);
  c.axis = j.value("axis", c.axis);
  c.half_length = j.value("half_length", c.half_length);
  return c;
}

inline nlohmann::json to_json(const Cylinder& c) {
  return {{"center", c.center}, {"radius", c.radius}, {"axis", c.axis}, {"half_length", c.half_length}};
}

inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  try {
    PhantomSpec s = default_phantom_spec(j.contains("dims") ? j.at("dims").get<std::vector<Index>>() : std::vector<Index>{128, 128, 128});
    if (j.contains("spacing")) s.spacing = j.at("spacing").get<std::vector<double>>();
    s.units = j.value("units", s.units);
    s.background_activity = j.value("background_activity", s.background_activity);
    s.sphere_activity = j.value("sphere_activity", s.sphere_activity);
    if (j.contains("spheres")) {
      s.spheres.clear();
      for (const auto& sp : j.at("spheres")) s.spheres.push_back({sp.at("center").get<Point3>(), sp.at("radius").get<double>()});
    }
    if (j.contains("cold_cylinder")) s.cold_cylinder = cylinder_from_json(j.at("cold_cylinder"), s.cold_cylinder);
    if (j.contains("body")) s.body = cylinder_from_json(j.at("body"), s.body);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed phantom spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const PhantomSpec& s) {
  nlohmann::json spheres = nlohmann::json::array();
  for (const auto& sp : s.spheres) spheres.push_back({{"center", sp.center}, {"radius", sp.radius}});
  return {{"dims", s.dims},
          {"spacing", s.spacing},
          {"units", s.units},
          {"background_activity", s.background_activity},
          {"sphere_activity", s.sphere_activity},
          {"spheres", spheres},
          {"cold_cylinder", to_json(s.cold_cylinder)},
          {"body", to_json(s.body)}};
}

inline NoiseSpec noise_spec_from_json(const nlohmann::json& j) {
  try {
    NoiseSpec n;
    n.kind = j.value("kind", n.kind);
    n.sigma = j.value("sigma", n.sigma);
    n.seed = j.value("seed", n.seed);
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed noise spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const NoiseSpec& n) { return {{"kind", n.kind}, {"sigma", n.sigma}, {"seed", n.seed}}; }

}  // namespace nnepps
