// nnepps command-line tool.
//
// Exit codes: 0 success, 2 infeasible input, 3 solver did not converge,
// 4 I/O or validation error.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "nnepps/nnepps.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nnepps;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInfeasible = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitInvalid = 4;

constexpr const char* kVersion = "1.0.0";

bool verbose() {
  const char* v = std::getenv("NNEPPS_VERBOSE");
  return v && *v && std::string(v) != "0";
}

void log(const std::string& msg) {
  if (verbose()) std::cerr << "nnepps: " << msg << '\n';
}

bool is_csv(const fs::path& p) { return p.extension() == ".csv" || p.extension() == ".txt"; }

fs::path sibling(const fs::path& p, const std::string& ext) {
  fs::path out = p;
  return out.replace_extension(ext);
}

struct VolumeArgs {
  std::string input;
  std::string meta;
  std::vector<Index> dims;  // CSV input only
};

void add_volume_options(CLI::App* app, VolumeArgs& a, bool required = true) {
  auto* in = app->add_option("--input", a.input, "raw f32le volume, or .csv text values");
  if (required) in->required();
  app->add_option("--meta", a.meta, "JSON sidecar (default: input with .json extension)");
  app->add_option("--dims", a.dims, "dims for CSV input, e.g. --dims 4 4 (default: 1D)")->delimiter(',');
}

Volume load_volume(const VolumeArgs& a) {
  const fs::path in(a.input);
  if (is_csv(in)) {
    auto values = parse_csv_values(read_text(in));
    std::vector<Index> dims = a.dims.empty() ? std::vector<Index>{values.size()} : a.dims;
    if (!a.meta.empty()) {
      const auto meta = read_sidecar(a.meta);
      dims = meta.dims;
      return Volume(dims, std::move(values), meta.spacing, meta.units);
    }
    return Volume(dims, std::move(values));
  }
  return read_volume(in, a.meta.empty() ? sibling(in, ".json") : fs::path(a.meta));
}

std::string format_csv(const Volume& v) {
  std::ostringstream out;
  const Index row = v.dims().back();
  for (Index i = 0; i < v.size(); ++i) {
    out << format_double(v[i]);
    out << ((i + 1) % row == 0 ? '\n' : ',');
  }
  return out.str();
}

/// Writes v to path (CSV or raw + sidecar); returns the written paths.
json save_volume(const Volume& v, const fs::path& path, const json& extra = json::object()) {
  if (is_csv(path)) {
    write_text(path, format_csv(v));
    return {{"data", path.string()}};
  }
  const auto meta = sibling(path, ".json");
  write_volume(v, path, meta, extra);
  return {{"data", path.string()}, {"meta", meta.string()}};
}

struct Manifest {
  json doc;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Manifest(const std::string& command, int argc, char** argv) {
    doc["tool"] = "nnepps";
    doc["version"] = kVersion;
    doc["command"] = command;
    doc["argv"] = std::vector<std::string>(argv, argv + argc);
    doc["config"] = json::object();
    doc["seeds"] = json::object();
    doc["inputs"] = json::object();
    doc["outputs"] = json::object();
  }

  void write(const fs::path& path) {
    doc["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(path, doc.dump(2) + "\n");
  }
};

json report_json(const SolverReport& r) {
  return {{"outer_iterations", r.outer_iterations},
          {"inner_sweeps", r.inner_sweeps},
          {"cg_iterations", r.cg_iterations},
          {"site_updates", r.total_site_updates},
          {"active_set_size", r.active_set_size},
          {"min_value_before_clamp", r.min_final_value},
          {"clamp_total", r.clamp_total},
          {"mean_drift", r.mean_drift},
          {"transfer_total", r.objective_l1},
          {"neg_tolerance", r.neg_tolerance},
          {"converged", r.converged},
          {"stop_reason", r.stop_reason}};
}

SweepOrder parse_order(const std::string& s) {
  if (s == "lexicographic") return SweepOrder::lexicographic();
  if (s == "reverse") return SweepOrder::reverse();
  if (s == "color-major") return SweepOrder::color_major();
  throw ValidationError("unknown sweep order '" + s + "' (expected lexicographic, reverse or color-major)");
}

struct SolverArgs {
  std::string mask = "3d-6";
  std::optional<double> tol;
  std::string boundary = "renormalize";
  std::string inner = "cg";
  std::string order = "lexicographic";
  unsigned threads = 1;
  std::size_t max_outer = 10'000;
  std::size_t max_inner = 1'000'000;
};

void add_solver_options(CLI::App* app, SolverArgs& a) {
  app->add_option("--mask", a.mask, "mask preset (1d-2, 2d-4, 2d-8, 3d-6, 3d-18, 3d-26) or mask file")->capture_default_str();
  app->add_option("--tol", a.tol, "absolute negativity tolerance (default 1e-9 * max|x|)");
  app->add_option("--boundary", a.boundary, "renormalize or reject")->capture_default_str();
  app->add_option("--inner", a.inner, "inner solver: cg or sweep")->capture_default_str();
  app->add_option("--order", a.order, "sweep order: lexicographic, reverse or color-major")->capture_default_str();
  app->add_option("--threads", a.threads, "worker threads (> 1 uses the colored order)")->capture_default_str();
  app->add_option("--max-outer", a.max_outer, "outer iteration cap")->capture_default_str();
  app->add_option("--max-inner", a.max_inner, "inner sweep / CG iteration cap per outer iteration")->capture_default_str();
}

SolverConfig make_config(const SolverArgs& a) {
  SolverConfig cfg;
  cfg.neg_tolerance = a.tol;
  cfg.boundary = parse_boundary_policy(a.boundary);
  cfg.inner_solver = parse_inner_solver(a.inner);
  cfg.sweep_order = parse_order(a.order);
  cfg.threads = a.threads;
  cfg.max_outer_iterations = a.max_outer;
  cfg.max_inner_sweeps = a.max_inner;
  cfg.validate();
  return cfg;
}

json config_json(const SolverArgs& a) {
  json j = {{"mask", a.mask},          {"boundary", a.boundary}, {"inner", a.inner},         {"order", a.order},
            {"threads", a.threads},    {"max_outer", a.max_outer}, {"max_inner", a.max_inner}};
  j["tol"] = a.tol ? json(*a.tol) : json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------

struct ApplyArgs {
  VolumeArgs vol;
  SolverArgs solver;
  std::string output;
  std::string alpha;
  std::string report;
};

int cmd_apply(const ApplyArgs& a, Manifest& m) {
  const Volume x = load_volume(a.vol);
  const SpreadMask mask = load_mask(a.solver.mask);
  const SolverConfig cfg = make_config(a.solver);
  m.doc["config"] = config_json(a.solver);
  m.doc["inputs"] = {{"input", a.vol.input}, {"meta", a.vol.meta}, {"mask", a.solver.mask}};
  const fs::path report = a.report.empty() ? sibling(a.output, ".manifest.json") : fs::path(a.report);

  if (check_feasible(x) == Feasibility::infeasible) {
    m.doc["verdict"] = "infeasible";
    m.doc["sum"] = sum(x);
    m.write(report);
    std::cerr << "nnepps: infeasible: image sum " << format_double(sum(x))
              << " is negative, so no non-negative redistribution exists\n";
    return kExitInfeasible;
  }
  log("solving " + std::to_string(x.size()) + " voxels");
  const auto r = solve(x, mask, cfg);
  m.doc["outputs"]["y"] = save_volume(r.y, a.output);
  if (!a.alpha.empty()) m.doc["outputs"]["alpha"] = save_volume(x.with_data(r.alpha.data), a.alpha);
  m.doc["report"] = report_json(r.report);
  m.doc["verdict"] = r.report.converged ? "converged" : "not-converged";
  m.write(report);
  if (!r.report.converged) {
    std::cerr << "nnepps: solver did not converge: " << r.report.stop_reason << '\n';
    return kExitNotConverged;
  }
  std::cout << "converged: " << r.report.outer_iterations << " outer iterations, transfer total "
            << format_double(r.report.objective_l1) << ", mean drift " << format_double(r.report.mean_drift) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
  VolumeArgs vol;
  std::string mask;
  std::string mask_file;
};

int cmd_check(const CheckArgs& a) {
  if (a.vol.input.empty() && a.mask.empty() && a.mask_file.empty())
    throw ValidationError("check needs --input and/or --mask / --mask-file");
  int code = kExitOk;
  if (!a.mask.empty() || !a.mask_file.empty()) {
    const SpreadMask m = a.mask_file.empty() ? load_mask(a.mask) : read_mask_file(a.mask_file);
    const auto violations = validate(m);
    if (violations.empty()) {
      std::cout << "mask: ok (" << m.taps.size() << " taps)\n";
    } else {
      std::cout << "mask: invalid\n";
      for (const auto& v : violations)
        std::cout << "  violation " << to_string(v.kind) << ": " << v.message << " (residual " << format_double(v.residual) << ")\n";
      code = kExitInvalid;
    }
  }
  if (!a.vol.input.empty()) {
    const Volume x = load_volume(a.vol);
    const double s = sum(x);
    const bool ok = check_feasible(x) == Feasibility::feasible;
    std::cout << "image: " << (ok ? "feasible" : "infeasible") << " (sum " << format_double(s) << ", mean "
              << format_double(s / static_cast<double>(x.size())) << ", negatives "
              << std::count_if(x.data().begin(), x.data().end(), [](double v) { return v < 0; }) << " of " << x.size() << ")\n";
    if (!ok && code == kExitOk) code = kExitInfeasible;
  }
  return code;
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
  std::string spec;
  std::string noise;
  std::vector<Index> dims;
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
  std::string out_prefix;
};

int cmd_phantom(const PhantomArgs& a, Manifest& m) {
  PhantomSpec spec;
  if (!a.spec.empty()) {
    json j;
    try {
      j = json::parse(read_text(a.spec));
    } catch (const json::exception& e) {
      throw IoError("malformed phantom spec: " + std::string(e.what()));
    }
    if (!a.dims.empty()) j["dims"] = a.dims;
    spec = phantom_spec_from_json(j);
  } else {
    spec = default_phantom_spec(a.dims.empty() ? std::vector<Index>{128, 128, 128} : a.dims);
  }
  NoiseSpec noise;
  if (!a.noise.empty()) {
    try {
      noise = noise_spec_from_json(json::parse(read_text(a.noise)));
    } catch (const json::exception& e) {
      throw IoError("malformed noise spec: " + std::string(e.what()));
    }
  }
  if (a.sigma) noise.sigma = *a.sigma;
  if (a.seed) noise.seed = *a.seed;

  const Phantom p = make_phantom(spec);
  const Volume noisy = add_noise(p.volume, noise);
  const std::string pre = a.out_prefix;
  m.doc["config"] = {{"phantom", to_json(spec)}, {"noise", to_json(noise)}};
  m.doc["seeds"] = {{"noise", noise.seed}};
  m.doc["inputs"] = {{"spec", a.spec}, {"noise", a.noise}};
  m.doc["outputs"]["volume"] = save_volume(noisy, pre + ".raw");
  m.doc["outputs"]["truth"] = save_volume(p.volume, pre + "_truth.raw");
  json names;
  for (int l = 0; l < 4; ++l) names[std::to_string(l)] = label_name(static_cast<PhantomLabel>(l));
  m.doc["outputs"]["labels"] = save_volume(p.labels, pre + "_labels.raw", {{"labels", names}});
  write_regions(pre + "_regions.txt", p.regions);
  m.doc["outputs"]["regions"] = pre + "_regions.txt";
  const json truths = {{"outside", 0.0}, {"cold", 0.0}, {"warm", spec.background_activity}, {"spheres", spec.sphere_activity}};
  write_text(pre + "_truths.json", truths.dump(2) + "\n");
  m.doc["outputs"]["truths"] = pre + "_truths.json";
  json counts = json::object();
  for (const auto& r : p.regions) counts[r.name] = r.indices.size();
  m.doc["region_counts"] = counts;
  m.write(pre + ".manifest.json");
  std::cout << "phantom " << spec.dims[0] << 'x' << spec.dims[1] << 'x' << spec.dims[2] << " written to " << pre << ".raw\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
  VolumeArgs vol;
  std::string regions;
  std::string truths;
  std::string profile;
  std::string out_prefix;
};

ProfileSpec profile_from_json(const json& j, const Volume& v) {
  ProfileSpec p;
  const auto& d = v.dims();
  const std::size_t pad = 3 - d.size();
  for (std::size_t a = 0; a < d.size(); ++a) p.center[pad + a] = (static_cast<double>(d[a]) - 1) / 2.0;
  if (j.contains("center")) {
    const auto c = j.at("center").get<std::vector<double>>();
    if (c.size() != 3) throw ValidationError("profile center must have 3 coordinates (z, y, x)");
    std::copy(c.begin(), c.end(), p.center.begin());
  }
  const std::string mode = j.value("mode", std::string("axis"));
  if (mode == "axis")
    p.mode = ProfileMode::radial_from_axis;
  else if (mode == "point")
    p.mode = ProfileMode::radial_from_point;
  else
    throw ValidationError("profile mode must be 'axis' or 'point'");
  p.axis = j.value("axis", 0);
  p.bin_width = j.value("bin_width", 1.0);
  if (j.contains("max_radius")) p.max_radius = j.at("max_radius").get<double>();
  p.physical_units = j.value("physical_units", false);
  p.validate();
  return p;
}

int cmd_metrics(const MetricsArgs& a, Manifest& m) {
  const Volume v = load_volume(a.vol);
  m.doc["inputs"] = {{"input", a.vol.input}, {"meta", a.vol.meta}, {"regions", a.regions}, {"truths", a.truths}, {"profile", a.profile}};
  if (!a.regions.empty()) {
    const auto regions = read_regions(a.regions);
    std::map<std::string, double> truths;
    if (!a.truths.empty()) {
      try {
        truths = json::parse(read_text(a.truths)).get<std::map<std::string, double>>();
      } catch (const json::exception& e) {
        throw IoError("malformed truths file: " + std::string(e.what()));
      }
    }
    std::ofstream out(a.out_prefix + "_regions.csv");
    if (!out) throw IoError("cannot write " + a.out_prefix + "_regions.csv");
    write_region_csv(out, region_metrics(v, regions, truths));
    m.doc["outputs"]["regions"] = a.out_prefix + "_regions.csv";
  }
  if (!a.profile.empty()) {
    json pj;
    try {
      pj = json::parse(read_text(a.profile));
    } catch (const json::exception& e) {
      throw IoError("malformed profile spec: " + std::string(e.what()));
    }
    const ProfileSpec p = profile_from_json(pj, v);
    std::optional<Region> restrict_to;
    if (pj.contains("region")) {
      if (a.regions.empty()) throw ValidationError("profile 'region' needs --regions");
      const auto regions = read_regions(a.regions);
      const Region* r = find_region(regions, pj.at("region").get<std::string>());
      if (!r) throw ValidationError("profile region '" + pj.at("region").get<std::string>() + "' not found");
      restrict_to = *r;
    }
    std::ofstream out(a.out_prefix + "_profile.csv");
    if (!out) throw IoError("cannot write " + a.out_prefix + "_profile.csv");
    write_profile_csv(out, radial_profile(v, p, restrict_to ? &*restrict_to : nullptr));
    m.doc["outputs"]["profile"] = a.out_prefix + "_profile.csv";
    m.doc["config"]["profile"] = pj;
  }
  if (a.regions.empty() && a.profile.empty()) throw ValidationError("metrics needs --regions and/or --profile");
  m.write(a.out_prefix + ".manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct OracleArgs {
  VolumeArgs vol;
  SolverArgs solver;
  std::string norm = "l1";
  std::string report;
};

int cmd_oracle_compare(const OracleArgs& a, Manifest& m) {
  const Volume x = load_volume(a.vol);
  const SpreadMask mask = load_mask(a.solver.mask);
  const SolverConfig cfg = make_config(a.solver);
  const Norm norm = parse_norm(a.norm);
  m.doc["config"] = config_json(a.solver);
  m.doc["config"]["norm"] = a.norm;
  m.doc["inputs"] = {{"input", a.vol.input}, {"meta", a.vol.meta}, {"mask", a.solver.mask}};
  if (check_feasible(x) == Feasibility::infeasible) {
    std::cerr << "nnepps: infeasible: image sum " << format_double(sum(x)) << " is negative\n";
    return kExitInfeasible;
  }
  const auto lp = make_dense_lp(x, mask, cfg.boundary, norm);
  const auto o = oracle_solve(lp);
  const auto r = solve(x, mask, cfg);
  const double scale = std::max(max_abs(x.data()), std::numeric_limits<double>::min());
  double dev = 0.0;
  for (Index i = 0; i < x.size(); ++i) dev = std::max(dev, std::abs(r.y[i] - o.y[i]));
  std::vector<double> sq;
  for (double v : r.alpha.data) sq.push_back(v * v);
  const double solver_objective = norm == Norm::l1 ? r.report.objective_l1 : sum(sq);
  json out = {{"norm", a.norm},
              {"voxels", x.size()},
              {"max_abs_deviation", dev},
              {"relative_deviation", dev / scale},
              {"solver_objective", solver_objective},
              {"oracle_objective", o.objective},
              {"solver_converged", r.report.converged}};
  if (x.size() <= kNormEquivalenceCap) out["l1_l2_deviation"] = norm_equivalence_check(x, mask, cfg.boundary);
  m.doc["report"] = out;
  std::cout << out.dump(2) << '\n';
  if (!a.report.empty()) m.write(a.report);
  return r.report.converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-negative redistribution of image intensities by local transfers"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  ApplyArgs apply_args;
  auto* apply_cmd = app.add_subcommand("apply", "make an image non-negative with minimal local transfers");
  add_volume_options(apply_cmd, apply_args.vol);
  add_solver_options(apply_cmd, apply_args.solver);
  apply_cmd->add_option("--output", apply_args.output, "output volume (raw f32le + .json sidecar, or .csv)")->required();
  apply_cmd->add_option("--alpha", apply_args.alpha, "also write the transfer map here");
  apply_cmd->add_option("--report", apply_args.report, "run manifest path (default: output with .manifest.json)");

  CheckArgs check_args;
  auto* check_cmd = app.add_subcommand("check", "report image feasibility and/or mask validity");
  add_volume_options(check_cmd, check_args.vol, false);
  check_cmd->add_option("--mask", check_args.mask, "mask preset or file to validate");
  check_cmd->add_option("--mask-file", check_args.mask_file, "mask file to validate");

  PhantomArgs phantom_args;
  auto* phantom_cmd = app.add_subcommand("phantom", "generate a synthetic phantom with seeded noise");
  phantom_cmd->add_option("--spec", phantom_args.spec, "phantom JSON (default geometry if omitted)");
  phantom_cmd->add_option("--noise", phantom_args.noise, "noise JSON {kind, sigma, seed}");
  phantom_cmd->add_option("--dims", phantom_args.dims, "grid dims z,y,x (default 128,128,128)")->delimiter(',');
  phantom_cmd->add_option("--sigma", phantom_args.sigma, "noise standard deviation (overrides --noise)");
  phantom_cmd->add_option("--seed", phantom_args.seed, "noise seed (overrides --noise)");
  phantom_cmd->add_option("--out-prefix", phantom_args.out_prefix, "output path prefix")->required();

  MetricsArgs metrics_args;
  auto* metrics_cmd = app.add_subcommand("metrics", "regional bias/RMSE and radial profile CSVs");
  add_volume_options(metrics_cmd, metrics_args.vol);
  metrics_cmd->add_option("--regions", metrics_args.regions, "region text file");
  metrics_cmd->add_option("--truths", metrics_args.truths, "JSON map region -> true value");
  metrics_cmd->add_option("--profile", metrics_args.profile, "profile JSON {center, mode, axis, bin_width, max_radius, region}");
  metrics_cmd->add_option("--out-prefix", metrics_args.out_prefix, "output path prefix")->required();

  OracleArgs oracle_args;
  auto* oracle_cmd = app.add_subcommand("oracle-compare", "compare the solver with the dense reference optimum (small images)");
  add_volume_options(oracle_cmd, oracle_args.vol);
  add_solver_options(oracle_cmd, oracle_args.solver);
  oracle_cmd->add_option("--norm", oracle_args.norm, "reference objective: l1 or l2")->capture_default_str();
  oracle_cmd->add_option("--report", oracle_args.report, "also write a manifest here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*apply_cmd) {
      Manifest m("apply", argc, argv);
      return cmd_apply(apply_args, m);
    }
    if (*check_cmd) return cmd_check(check_args);
    if (*phantom_cmd) {
      Manifest m("phantom", argc, argv);
      return cmd_phantom(phantom_args, m);
    }
    if (*metrics_cmd) {
      Manifest m("metrics", argc, argv);
      return cmd_metrics(metrics_args, m);
    }
    if (*oracle_cmd) {
      Manifest m("oracle-compare", argc, argv);
      return cmd_oracle_compare(oracle_args, m);
    }
  } catch (const InfeasibleError& e) {
    std::cerr << "nnepps: infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const Error& e) {
    std::cerr << "nnepps: error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "nnepps: error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}
