#pragma once

// Volumes, regions, reductions and the raw + sidecar file format.
//
// Storage convention: row-major, last axis fastest. A volume with dims
// {nz, ny, nx} stores voxel (z, y, x) at flat index (z * ny + y) * nx + x.
// Volumes with fewer than three axes are treated as having leading axes of
// extent 1 wherever a 3-axis view is needed.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include "nnepps/errors.hpp"

namespace nnepps {

using Index = std::size_t;

/// Three-axis view of a 1-3 axis shape, padded with leading 1s.
struct Extent {
  std::array<Index, 3> n{1, 1, 1};  // {nz, ny, nx}

  static Extent from_dims(std::span<const Index> dims) {
    Extent e;
    const std::size_t pad = 3 - dims.size();
    for (std::size_t a = 0; a < dims.size(); ++a) e.n[pad + a] = dims[a];
    return e;
  }

  Index size() const { return n[0] * n[1] * n[2]; }

  Index flat(std::array<std::ptrdiff_t, 3> c) const {
    return (static_cast<Index>(c[0]) * n[1] + static_cast<Index>(c[1])) * n[2] + static_cast<Index>(c[2]);
  }

  std::array<std::ptrdiff_t, 3> coords(Index i) const {
    const auto x = static_cast<std::ptrdiff_t>(i % n[2]);
    i /= n[2];
    const auto y = static_cast<std::ptrdiff_t>(i % n[1]);
    const auto z = static_cast<std::ptrdiff_t>(i / n[1]);
    return {z, y, x};
  }

  bool contains(std::array<std::ptrdiff_t, 3> c) const {
    for (int a = 0; a < 3; ++a)
      if (c[a] < 0 || c[a] >= static_cast<std::ptrdiff_t>(n[a])) return false;
    return true;
  }
};

inline void check_dims(std::span<const Index> dims) {
  if (dims.empty() || dims.size() > 3) throw ValidationError("volume must have 1 to 3 axes");
  for (auto d : dims)
    if (d == 0) throw ValidationError("volume axes must have positive extent");
}

inline Index dims_product(std::span<const Index> dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>{});
}

/// N-dimensional (1-3 axes) grid of finite 64-bit intensities.
class Volume {
public:
  Volume() = default;

  Volume(std::vector<Index> dims, std::vector<double> data, std::vector<double> spacing = {},
         std::string units = {})
      : dims_(std::move(dims)), spacing_(std::move(spacing)), data_(std::move(data)), units_(std::move(units)) {
    check_dims(dims_);
    if (spacing_.empty()) spacing_.assign(dims_.size(), 1.0);
    if (spacing_.size() != dims_.size()) throw ValidationError("spacing must have one entry per axis");
    for (double s : spacing_)
      if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("spacing entries must be positive and finite");
    if (data_.size() != dims_product(dims_))
      throw ValidationError("volume holds " + std::to_string(data_.size()) + " values but dims require " +
                            std::to_string(dims_product(dims_)));
    for (double v : data_)
      if (!std::isfinite(v)) throw ValidationError("volume contains a non-finite value");
  }

  /// Zero-filled volume.
  static Volume zeros(std::vector<Index> dims, std::vector<double> spacing = {}, std::string units = {}) {
    check_dims(dims);
    std::vector<double> data(dims_product(dims), 0.0);
    return Volume(std::move(dims), std::move(data), std::move(spacing), std::move(units));
  }

  const std::vector<Index>& dims() const { return dims_; }
  const std::vector<double>& spacing() const { return spacing_; }
  const std::string& units() const { return units_; }
  Extent extent() const { return Extent::from_dims(dims_); }
  Index size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  /// Mutable access; callers are responsible for keeping values finite.
  std::span<double> mutable_data() { return data_; }

  double operator[](Index i) const { return data_[i]; }
  double& operator[](Index i) { return data_[i]; }

  Volume with_data(std::vector<double> data) const { return Volume(dims_, std::move(data), spacing_, units_); }

  friend bool operator==(const Volume&, const Volume&) = default;

private:
  std::vector<Index> dims_;
  std::vector<double> spacing_;
  std::vector<double> data_;
  std::string units_;
};

// ---------------------------------------------------------------------------
// Reductions

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
  void add(double v) {
    const double t = s_ + v;
    if (std::abs(s_) >= std::abs(v))
      c_ += (s_ - t) + v;
    else
      c_ += (v - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

private:
  double s_ = 0.0;
  double c_ = 0.0;
};

/// Compensated sum in increasing index order. The order is fixed so results
/// are bit-reproducible on a given platform.
inline double sum(std::span<const double> values) {
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value();
}

inline double sum(const Volume& v) { return sum(v.data()); }

inline double abs_sum(std::span<const double> values) {
  std::vector<double> a(values.size());
  std::transform(values.begin(), values.end(), a.begin(), [](double v) { return std::abs(v); });
  return sum(a);
}

inline double max_abs(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

inline double min_value(std::span<const double> values) {
  return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
}

// ---------------------------------------------------------------------------
// Regions

/// Named set of flat voxel indices, strictly increasing.
struct Region {
  std::string name;
  std::vector<Index> indices;

  void validate(Index volume_size) const {
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= volume_size)
        throw ValidationError("region '" + name + "' index " + std::to_string(indices[k]) + " out of bounds");
      if (k > 0 && indices[k] <= indices[k - 1])
        throw ValidationError("region '" + name + "' indices must be strictly increasing");
    }
  }
};

struct RegionStats {
  Index count = 0;
  double mean = 0.0;
  double rmse = 0.0;  // root mean square deviation from the reference constant
};

/// Mean over the region and RMSE against a constant reference value.
inline RegionStats region_stats(const Volume& v, const Region& r, double reference = 0.0) {
  r.validate(v.size());
  if (r.indices.empty()) throw ValidationError("region '" + r.name + "' is empty");
  std::vector<double> vals;
  std::vector<double> sq;
  vals.reserve(r.indices.size());
  sq.reserve(r.indices.size());
  for (Index i : r.indices) {
    vals.push_back(v[i]);
    sq.push_back((v[i] - reference) * (v[i] - reference));
  }
  const double n = static_cast<double>(r.indices.size());
  return {r.indices.size(), sum(vals) / n, std::sqrt(sum(sq) / n)};
}

/// Splits a label volume into one region per distinct label. Labels must be
/// non-negative integers; `names` maps label values to region names (labels
/// without a name are called "label<N>").
inline std::vector<Region> regions_from_labels(const Volume& labels, const std::map<int, std::string>& names = {}) {
  std::map<int, Region> by_label;
  for (Index i = 0; i < labels.size(); ++i) {
    const double l = labels[i];
    if (l < 0 || l != std::floor(l) || l > 1e9) throw ValidationError("label volume must hold non-negative integers");
    const int id = static_cast<int>(l);
    auto& r = by_label[id];
    if (r.name.empty()) {
      auto it = names.find(id);
      r.name = it != names.end() ? it->second : "label" + std::to_string(id);
    }
    r.indices.push_back(i);
  }
  std::vector<Region> out;
  for (auto& [id, r] : by_label) out.push_back(std::move(r));
  return out;
}

/// Inverse of regions_from_labels: voxels not covered by any region get 0.
inline Volume labels_from_regions(const std::vector<Index>& dims, const std::vector<Region>& regions,
                                  const std::vector<int>& ids) {
  if (ids.size() != regions.size()) throw ValidationError("one label id per region required");
  Volume out = Volume::zeros(dims);
  for (std::size_t k = 0; k < regions.size(); ++k) {
    regions[k].validate(out.size());
    for (Index i : regions[k].indices) out[i] = ids[k];
  }
  return out;
}

/// Text form: one region per line, "name idx idx idx ...". Blank lines and
/// lines starting with '#' are ignored.
inline void write_regions(const std::filesystem::path& path, const std::vector<Region>& regions) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : regions) {
    out << r.name;
    for (Index i : r.indices) out << ' ' << i;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<Region> read_regions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Region> regions;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    Region r;
    if (!(ls >> r.name) || r.name.front() == '#') continue;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        r.indices.push_back(std::stoull(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw IoError("malformed index '" + tok + "' in region file " + path.string());
      }
    }
    regions.push_back(std::move(r));
  }
  return regions;
}

// ---------------------------------------------------------------------------
// File I/O
//
// Raw payload: contiguous little-endian IEEE-754 binary32, no header.
// Sidecar (JSON):
//   {"dims": [nz, ny, nx], "spacing": [sz, sy, sx], "dtype": "f32le",
//    "order": "C", "units": "Bq/mL"}
// Extra keys are preserved by callers that need them (e.g. label names) and
// ignored here. Values are widened exactly on read; on write they are
// narrowed with round-to-nearest-even (the default IEEE conversion).

struct Sidecar {
  std::vector<Index> dims;
  std::vector<double> spacing;
  std::string units;
  nlohmann::json extra = nlohmann::json::object();
};

inline Sidecar parse_sidecar(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed sidecar: ") + e.what());
  }
  Sidecar s;
  try {
    if (!j.is_object() || !j.contains("dims")) throw IoError("malformed sidecar: missing 'dims'");
    for (const auto& d : j.at("dims")) {
      if (!d.is_number_integer() || d.get<long long>() <= 0) throw IoError("malformed sidecar: dims must be positive integers");
      s.dims.push_back(d.get<Index>());
    }
    if (s.dims.empty() || s.dims.size() > 3) throw IoError("malformed sidecar: 1 to 3 dims required");
    if (j.contains("spacing")) s.spacing = j.at("spacing").get<std::vector<double>>();
    if (j.value("dtype", std::string("f32le")) != "f32le") throw IoError("unsupported dtype (only f32le)");
    if (j.value("order", std::string("C")) != "C") throw IoError("unsupported order (only C)");
    s.units = j.value("units", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed sidecar: ") + e.what());
  }
  for (const auto& [key, val] : j.items())
    if (key != "dims" && key != "spacing" && key != "dtype" && key != "order" && key != "units") s.extra[key] = val;
  return s;
}

inline nlohmann::json sidecar_json(const Volume& v, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = {{"dims", v.dims()}, {"spacing", v.spacing()}, {"dtype", "f32le"}, {"order", "C"},
                      {"units", v.units()}};
  for (const auto& [key, val] : extra.items()) j[key] = val;
  return j;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Sidecar read_sidecar(const std::filesystem::path& path) { return parse_sidecar(read_text(path)); }

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace detail

/// Reads a raw f32le payload with its sidecar. Throws IoError on size
/// mismatch or malformed metadata, ValidationError on non-finite values.
inline Volume read_volume(const std::filesystem::path& data_path, const std::filesystem::path& meta_path,
                          Sidecar* sidecar_out = nullptr) {
  Sidecar meta = read_sidecar(meta_path);
  const Index n = dims_product(meta.dims);
  std::ifstream in(data_path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + data_path.string());
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  if (bytes != n * 4)
    throw IoError("size mismatch: " + data_path.string() + " holds " + std::to_string(bytes) + " bytes, sidecar dims need " +
                  std::to_string(n * 4));
  in.seekg(0);
  std::vector<std::uint32_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
  if (!in) throw IoError("read failed: " + data_path.string());
  std::vector<double> data(n);
  for (Index i = 0; i < n; ++i) {
    const std::uint32_t bits = detail::to_le(raw[i]);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f)) throw ValidationError("non-finite value at voxel " + std::to_string(i) + " of " + data_path.string());
    data[i] = f;
  }
  Volume v(meta.dims, std::move(data), meta.spacing, meta.units);
  if (sidecar_out) *sidecar_out = std::move(meta);
  return v;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

/// Writes the payload narrowed to binary32 and the JSON sidecar.
inline void write_volume(const Volume& v, const std::filesystem::path& data_path, const std::filesystem::path& meta_path,
                         const nlohmann::json& extra = nlohmann::json::object()) {
  std::vector<std::uint32_t> raw(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const auto f = static_cast<float>(v[i]);
    if (!std::isfinite(f)) throw ValidationError("value at voxel " + std::to_string(i) + " overflows binary32");
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    raw[i] = detail::to_le(bits);
  }
  std::ofstream out(data_path, std::ios::binary);
  if (!out) throw IoError("cannot open " + data_path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw IoError("write failed: " + data_path.string());
  write_text(meta_path, sidecar_json(v, extra).dump(2) + "\n");
}

/// Comma/whitespace separated text values (for small hand-made inputs).
inline std::vector<double> parse_csv_values(const std::string& text) {
  std::vector<double> out;
  std::string tok;
  auto flush = [&] {
    if (tok.empty()) return;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw IoError("malformed value '" + tok + "'");
    }
    tok.clear();
  };
  for (char c : text) {
    if (c == ',' || c == ';' || std::isspace(static_cast<unsigned char>(c)))
      flush();
    else
      tok.push_back(c);
  }
  flush();
  return out;
}

}  // namespace nnepps
