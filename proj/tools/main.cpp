// ionpulse command-line tool: mode tables, drive optimization, simulation,
// noise scans, and chain-length benchmarks from a single JSON config.

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <thread>

#include "ionpulse/analysis.hpp"
#include "ionpulse/chain.hpp"
#include "ionpulse/io.hpp"
#include "ionpulse/optimizer.hpp"
#include "ionpulse/units.hpp"

namespace {

using namespace ionpulse;

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_quality = 3;
constexpr int exit_solver = 4;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 0;
  std::string drive_path;
};

int default_threads() {
  if (const char* env = std::getenv("IONPULSE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

struct Workspace {
  ExperimentConfig config;
  TrapChainConfig trap;
  EquilibriumPositions positions;
  ModeData modes;
  GateTarget target;
  SchemeConfig scheme;
  KernelSet kernels;
};

Workspace build_workspace(const Options& options) {
  Workspace ws{load_config(options.config_path), {}, {}, {}, {}, {}, {}};
  if (options.seed) ws.config.seed = *options.seed;
  if (options.out_dir) ws.config.output_directory = *options.out_dir;
  ws.trap = ws.config.trap_chain();
  ws.positions = equilibrium_positions(ws.trap);
  ws.modes = build_mode_data(ws.trap, ws.positions, ws.config.laser_detuning_rads(),
                             ws.config.mean_phonons_per_axis());
  ws.target = ws.config.gate_target();
  ws.scheme = ws.config.scheme_config();
  ws.kernels = KernelSet::build_uniform(ws.modes, ws.config.duration_s(),
                                        ws.config.segments, ws.target.addressed());
  return ws;
}

std::string out_path(const Workspace& ws, const std::string& name) {
  return (std::filesystem::path(ws.config.output_directory) / name).string();
}

std::vector<double> sample_times(double duration, int count) {
  std::vector<double> times(count);
  for (int i = 0; i < count; ++i) times[i] = duration * i / (count - 1);
  times.back() = duration;
  return times;
}

// axis spec: {"values": [...]} or {"min":, "max":, "count":, "log": bool}
std::vector<double> parse_axis(const json& spec, const std::string& name) {
  if (spec.contains("values")) return spec["values"].get<std::vector<double>>();
  if (!spec.contains("min") || !spec.contains("max") || !spec.contains("count"))
    throw validation_error("axis '" + name + "' needs values or min/max/count");
  const double lo = spec["min"].get<double>();
  const double hi = spec["max"].get<double>();
  const int count = spec["count"].get<int>();
  if (count < 1 || !(hi >= lo)) throw validation_error("bad axis spec for '" + name + "'");
  const bool log_scale = spec.value("log", false);
  if (log_scale && !(lo > 0.0))
    throw validation_error("log axis '" + name + "' needs positive bounds");
  std::vector<double> axis(count);
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    axis[i] = log_scale ? lo * std::pow(hi / lo, f) : lo + f * (hi - lo);
  }
  return axis;
}

void run_parallel(int n_items, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n_items));
  if (workers <= 1) {
    for (int i = 0; i < n_items; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n_items; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

OptimizationProblem make_problem(const Workspace& ws, int threads) {
  OptimizationProblem problem;
  problem.kernels = &ws.kernels;
  problem.target = ws.target;
  problem.scheme = ws.scheme;
  problem.instance_count = ws.config.instances;
  problem.iteration_budget = ws.config.budget;
  problem.tolerance = ws.config.tolerance;
  problem.rng_seed = ws.config.seed;
  problem.threads = threads;
  return problem;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_modes(const Options& options) {
  const Workspace ws = build_workspace(options);
  const auto& modes = ws.modes;
  std::cout << "chain of " << ws.trap.n_ions << " ions, " << modes.n_modes()
            << " coupled modes; laser detuning "
            << units::rads_to_mhz(modes.laser_detuning) << " MHz\n";
  std::cout << std::left << std::setw(6) << "mode" << std::setw(6) << "axis"
            << std::setw(14) << "freq_mhz" << std::setw(16) << "detuning_khz"
            << std::setw(8) << "nbar" << "eta_j\n";
  for (int p = 0; p < modes.n_modes(); ++p) {
    std::cout << std::left << std::setw(6) << p << std::setw(6)
              << axis_name(modes.axes[p]) << std::setw(14) << std::setprecision(8)
              << units::rads_to_mhz(modes.frequencies[p]) << std::setw(16)
              << std::setprecision(6) << units::rads_to_khz(modes.detunings[p])
              << std::setw(8) << modes.mean_phonons[p];
    for (int j = 0; j < modes.n_ions(); ++j)
      std::cout << std::setprecision(5) << modes.lamb_dicke(j, p) << ' ';
    std::cout << '\n';
  }
  if (options.out_dir || ws.config.emits("modes")) {
    std::ostringstream csv;
    csv << "mode,axis,freq_mhz,detuning_khz,nbar,ion,eigenvector,eta\n";
    csv << std::setprecision(17);
    for (int p = 0; p < modes.n_modes(); ++p)
      for (int j = 0; j < modes.n_ions(); ++j)
        csv << p << ',' << axis_name(modes.axes[p]) << ','
            << units::rads_to_mhz(modes.frequencies[p]) << ','
            << units::rads_to_khz(modes.detunings[p]) << ',' << modes.mean_phonons[p]
            << ',' << j << ',' << modes.eigenvectors(j, p) << ','
            << modes.lamb_dicke(j, p) << '\n';
    write_text_file(out_path(ws, "modes.csv"), csv.str());
  }
  return exit_ok;
}

void emit_series(const Workspace& ws, const DriveWaveform& drive) {
  const auto times = sample_times(drive.duration, ws.config.samples);
  write_trajectory_csv(trajectory_series(drive, ws.modes, times), drive, ws.modes,
                       out_path(ws, "trajectories.csv"));
  write_phase_csv(phase_series(drive, ws.modes, times), drive, ws.target,
                  out_path(ws, "phases.csv"));
}

int cmd_optimize(const Options& options) {
  Workspace ws = build_workspace(options);
  const int threads = options.threads > 0 ? options.threads : default_threads();
  OptimizationProblem problem = make_problem(ws, threads);

  OptimizationResult best;
  std::vector<double> run_infidelities;
  for (int run = 0; run < ws.config.runs; ++run) {
    if (ws.config.runs > 1)
      problem.rng_seed = instance_seed(ws.config.seed, 1000003 + run);
    OptimizationResult result = optimize(problem);
    run_infidelities.push_back(result.operational_infidelity);
    if (run == 0 || result.operational_infidelity < best.operational_infidelity)
      best = std::move(result);
  }

  const FidelityReport fidelity =
      operational_infidelity(best.best_drive, ws.kernels, ws.target);
  json report = report_to_json(best, fidelity, ws.config, threads);
  if (ws.config.runs > 1) report["run_infidelities"] = run_infidelities;
  write_text_file(out_path(ws, "report.json"), canonical_json(report));
  save_drive(best.best_drive, out_path(ws, "drive.json"));
  write_cost_history_csv(best, out_path(ws, "cost_history.csv"));
  if (ws.config.emits("trajectories") || ws.config.emits("phases"))
    emit_series(ws, best.best_drive);

  std::cout << "infidelity " << std::setprecision(6) << best.operational_infidelity
            << "  cost " << best.final_cost.total() << "  wall " << std::setprecision(4)
            << best.wall_time_s << " s  seed " << best.seed << "  threads " << threads
            << '\n';
  if (ws.config.quality_threshold &&
      best.operational_infidelity > *ws.config.quality_threshold) {
    std::cerr << "infidelity above quality threshold "
              << *ws.config.quality_threshold << '\n';
    return exit_quality;
  }
  return exit_ok;
}

int cmd_simulate(const Options& options) {
  const Workspace ws = build_workspace(options);
  if (options.drive_path.empty())
    throw validation_error("simulate needs --drive pointing at a drive.json");
  const DriveWaveform drive = load_drive(options.drive_path);
  ws.kernels.check_grid(drive);

  emit_series(ws, drive);
  const FidelityReport fidelity = operational_infidelity(drive, ws.kernels, ws.target);
  const Eigen::MatrixXcd endpoints = ws.kernels.displacements(drive);
  std::cout << "max endpoint |alpha| " << std::setprecision(6)
            << endpoints.cwiseAbs().maxCoeff() << "  max |phase error| "
            << fidelity.phase_errors.cwiseAbs().maxCoeff() << "  infidelity "
            << fidelity.infidelity << '\n';
  return exit_ok;
}

int scan_with_drive(const Workspace& ws, const Options& options, const std::string& type) {
  if (options.drive_path.empty())
    throw validation_error("scan type '" + type + "' needs --drive");
  const DriveWaveform drive = load_drive(options.drive_path);
  ws.kernels.check_grid(drive);

  ScanResult scan;
  if (type == "detuning_offset") {
    auto axis = parse_axis(ws.config.scan_spec.at("offsets_khz"), "offsets_khz");
    std::vector<double> offsets;
    for (double v : axis) offsets.push_back(units::khz_to_rads(v));
    scan = quasi_static_detuning_scan(drive, ws.kernels, ws.target, offsets);
    scan.axis_name = "detuning_offset_khz";
    scan.axis = axis;
  } else if (type == "timing") {
    scan = timing_error_scan(drive, ws.kernels, ws.target,
                             parse_axis(ws.config.scan_spec.at("values"), "values"));
  } else if (type == "amplitude") {
    scan = amplitude_error_scan(drive, ws.kernels, ws.target,
                                parse_axis(ws.config.scan_spec.at("values"), "values"));
  } else { // filter
    auto axis = parse_axis(ws.config.scan_spec.at("frequencies_khz"), "frequencies_khz");
    std::vector<double> omegas;
    for (double v : axis) omegas.push_back(units::khz_to_rads(v));
    scan = filter_function(drive, ws.kernels, omegas);
    scan.axis_name = "noise_frequency_khz";
    scan.axis = axis;
  }
  write_scan_csv(scan, out_path(ws, "scan.csv"));
  std::cout << "scan '" << type << "' wrote " << scan.axis.size() << " rows\n";
  return exit_ok;
}

int scan_domain(const Workspace& ws, const Options& options) {
  const json& spec = ws.config.scan_spec;
  const auto detunings = parse_axis(spec.at("detuning_mhz"), "detuning_mhz");
  const auto durations = parse_axis(spec.at("duration_us"), "duration_us");
  const int threads = options.threads > 0 ? options.threads : default_threads();
  const int cells = static_cast<int>(detunings.size() * durations.size());
  std::vector<json> rows(cells);
  const std::string cell_dir = out_path(ws, "cells");

  run_parallel(cells, threads, [&](int cell) {
    const double detuning_mhz = detunings[cell / durations.size()];
    const double duration_us = durations[cell % durations.size()];
    const std::string cell_path =
        cell_dir + "/domain_" + std::to_string(cell) + ".json";
    if (std::filesystem::exists(cell_path)) { // resume from an earlier run
      rows[cell] = json::parse(read_text_file(cell_path));
      return;
    }
    Workspace local = ws;
    local.modes = build_mode_data(local.trap, local.positions,
                                  units::mhz_to_rads(detuning_mhz),
                                  local.config.mean_phonons_per_axis());
    local.kernels =
        KernelSet::build_uniform(local.modes, units::us_to_s(duration_us),
                                 local.config.segments, local.target.addressed());
    OptimizationProblem problem = make_problem(local, 1);
    problem.rng_seed = instance_seed(ws.config.seed, 500000 + cell);
    const OptimizationResult result = optimize(problem);
    rows[cell] = {{"detuning_mhz", detuning_mhz},
                  {"duration_us", duration_us},
                  {"infidelity", result.operational_infidelity},
                  {"wall_time_s", result.wall_time_s}};
    write_text_file(cell_path, canonical_json(rows[cell]));
  });

  std::ostringstream csv;
  csv << "detuning_mhz,duration_us,infidelity,wall_time_s\n" << std::setprecision(17);
  for (const auto& row : rows)
    csv << row["detuning_mhz"].get<double>() << ',' << row["duration_us"].get<double>()
        << ',' << row["infidelity"].get<double>() << ','
        << row["wall_time_s"].get<double>() << '\n';
  write_text_file(out_path(ws, "scan.csv"), csv.str());
  std::cout << "domain scan wrote " << cells << " cells\n";
  return exit_ok;
}

int scan_power(const Workspace& ws, const Options& options) {
  const json& spec = ws.config.scan_spec;
  const auto rabi_khz = parse_axis(spec.at("max_rabi_khz"), "max_rabi_khz");
  const auto scheme_names =
      spec.value("schemes", std::vector<std::string>{ws.config.scheme_name});
  const int threads = options.threads > 0 ? options.threads : default_threads();
  const int cells = static_cast<int>(rabi_khz.size() * scheme_names.size());
  std::vector<double> infidelities(cells, 0.0);
  const std::string cell_dir = out_path(ws, "cells");

  run_parallel(cells, threads, [&](int cell) {
    const int scheme_idx = cell / static_cast<int>(rabi_khz.size());
    const int rabi_idx = cell % static_cast<int>(rabi_khz.size());
    const std::string cell_path =
        cell_dir + "/power_" + std::to_string(cell) + ".json";
    if (std::filesystem::exists(cell_path)) {
      infidelities[cell] = json::parse(read_text_file(cell_path))["infidelity"];
      return;
    }
    Workspace local = ws;
    local.scheme.modulation = modulation_from_name(scheme_names[scheme_idx]);
    local.scheme.max_rabi = units::khz_to_rads(rabi_khz[rabi_idx]);
    OptimizationProblem problem = make_problem(local, 1);
    problem.rng_seed = instance_seed(ws.config.seed, 600000 + cell);
    infidelities[cell] = optimize(problem).operational_infidelity;
    write_text_file(cell_path,
                    canonical_json(json{{"infidelity", infidelities[cell]}}));
  });

  ScanResult scan;
  scan.axis_name = "max_rabi_khz";
  scan.axis = rabi_khz;
  for (size_t s = 0; s < scheme_names.size(); ++s) {
    std::vector<double> column(rabi_khz.size());
    for (size_t i = 0; i < rabi_khz.size(); ++i)
      column[i] = infidelities[s * rabi_khz.size() + i];
    scan.columns.emplace_back("infidelity_" + scheme_names[s], column);
  }
  write_scan_csv(scan, out_path(ws, "scan.csv"));
  std::cout << "power scan wrote " << rabi_khz.size() << " rows x "
            << scheme_names.size() << " schemes\n";
  return exit_ok;
}

int cmd_scan(const Options& options) {
  const Workspace ws = build_workspace(options);
  if (ws.config.scan_spec.is_null())
    throw validation_error("config has no 'scan' section");
  const std::string type = ws.config.scan_spec.value("type", "");
  if (type == "domain") return scan_domain(ws, options);
  if (type == "power") return scan_power(ws, options);
  if (type == "detuning_offset" || type == "timing" || type == "amplitude" ||
      type == "filter")
    return scan_with_drive(ws, options, type);
  throw validation_error("unknown scan type: '" + type + "'");
}

int cmd_benchmark(const Options& options) {
  const Workspace base = build_workspace(options);
  const json& spec = base.config.benchmark_spec;
  if (spec.is_null()) throw validation_error("config has no 'benchmark' section");
  const auto lengths = spec.at("lengths").get<std::vector<int>>();
  const int repeats = spec.value("repeats", 10);
  const int threads = options.threads > 0 ? options.threads : default_threads();
  for (int n : lengths)
    if (n < 4) throw validation_error("benchmark lengths must be >= 4");

  std::ostringstream csv;
  csv << "n_ions,repeats,threads,time_mean_s,time_std_s,infidelity_mean,infidelity_std\n";
  std::cout << std::left << std::setw(8) << "n_ions" << std::setw(14) << "time_mean_s"
            << std::setw(14) << "time_std_s" << std::setw(18) << "infidelity_mean"
            << "infidelity_std\n";
  for (int n : lengths) {
    Workspace ws = base;
    ws.config.n_ions = n;
    ws.trap = ws.config.trap_chain();
    ws.positions = equilibrium_positions(ws.trap);
    ws.modes = build_mode_data(ws.trap, ws.positions, ws.config.laser_detuning_rads(),
                               ws.config.mean_phonons_per_axis());
    ws.target = ws.config.gate_target();
    ws.kernels = KernelSet::build_uniform(ws.modes, ws.config.duration_s(),
                                          ws.config.segments, ws.target.addressed());
    std::vector<double> times(repeats), infidelities(repeats);
    run_parallel(repeats, threads, [&](int r) {
      OptimizationProblem problem = make_problem(ws, 1);
      problem.rng_seed = instance_seed(ws.config.seed, 700000 + 1000 * n + r);
      const auto t0 = std::chrono::steady_clock::now();
      const OptimizationResult result = optimize(problem);
      times[r] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      infidelities[r] = result.operational_infidelity;
    });
    auto stats = [](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= v.size();
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      return std::pair<double, double>{mean,
                                       v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0};
    };
    const auto [tm, ts] = stats(times);
    const auto [im, is] = stats(infidelities);
    csv << n << ',' << repeats << ',' << threads << ',' << std::setprecision(17) << tm
        << ',' << ts << ',' << im << ',' << is << '\n';
    std::cout << std::left << std::setw(8) << n << std::setw(14)
              << std::setprecision(4) << tm << std::setw(14) << ts << std::setw(18)
              << std::setprecision(6) << im << is << '\n';
  }
  write_text_file(out_path(base, "benchmark.csv"), csv.str());
  return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"piecewise-constant drive synthesis for trapped-ion entangling gates"};
  app.require_subcommand(1);

  Options options;
  auto add_common = [&](CLI::App* cmd, bool with_drive) {
    cmd->add_option("--config", options.config_path, "experiment config (JSON)")
        ->required();
    cmd->add_option("--seed", options.seed, "override optimizer.seed");
    cmd->add_option("--out", options.out_dir, "override outputs.directory");
    cmd->add_option("--threads", options.threads, "worker threads (default: env IONPULSE_THREADS or all cores)");
    if (with_drive) cmd->add_option("--drive", options.drive_path, "drive.json path");
  };

  CLI::App* modes = app.add_subcommand("modes", "print the coupled mode table");
  add_common(modes, false);
  CLI::App* optimize = app.add_subcommand("optimize", "synthesize a drive for the configured gates");
  add_common(optimize, false);
  CLI::App* simulate = app.add_subcommand("simulate", "sample trajectories and phase dynamics of a drive");
  add_common(simulate, true);
  CLI::App* scan = app.add_subcommand("scan", "noise/domain scans per the config's scan section");
  add_common(scan, true);
  CLI::App* benchmark = app.add_subcommand("benchmark", "chain-length scaling benchmark");
  add_common(benchmark, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (modes->parsed()) return cmd_modes(options);
    if (optimize->parsed()) return cmd_optimize(options);
    if (simulate->parsed()) return cmd_simulate(options);
    if (scan->parsed()) return cmd_scan(options);
    if (benchmark->parsed()) return cmd_benchmark(options);
  } catch (const validation_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_validation;
  } catch (const solver_error& err) {
    std::cerr << "solver error: " << err.what() << '\n';
    return exit_solver;
  } catch (const std::exception& err) {
    std::cerr << "unexpected error: " << err.what() << '\n';
    return 1;
  }
  return exit_ok;
}
