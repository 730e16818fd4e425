#include "ionpulse/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ionpulse/units.hpp"

namespace ionpulse {

namespace {

const json& require(const json& j, const std::string& key, const std::string& context) {
  const auto it = j.find(key);
  if (it == j.end())
    throw validation_error("config is missing '" + context + key + "'");
  return *it;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

std::array<double, 3> triple(const json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 3)
    throw validation_error("'" + name + "' must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::pair<int, int> parse_pair_key(const std::string& key) {
  const auto comma = key.find(',');
  if (comma == std::string::npos)
    throw validation_error("pair keys must look like \"j,k\": " + key);
  try {
    const int a = std::stoi(key.substr(0, comma));
    const int b = std::stoi(key.substr(comma + 1));
    return {a, b};
  } catch (const std::exception&) {
    throw validation_error("could not parse pair key: " + key);
  }
}

} // namespace

std::string canonical_json(const json& document) { return document.dump(2) + "\n"; }

ExperimentConfig parse_config(const json& document) {
  try {
    ExperimentConfig cfg;
    const json& trap = require(document, "trap", "");
    cfg.n_ions = require(trap, "n_ions", "trap.").get<int>();
    cfg.mass_amu = require(trap, "mass_amu", "trap.").get<double>();
    cfg.com_frequencies_mhz =
        triple(require(trap, "com_frequencies_mhz", "trap."), "com_frequencies_mhz");
    const json& wavevector = require(trap, "wavevector", "trap.");
    cfg.wavelength_nm = require(wavevector, "wavelength_nm", "trap.wavevector.").get<double>();
    cfg.wavevector_direction =
        triple(require(wavevector, "direction", "trap.wavevector."), "direction");

    const json& laser = require(document, "laser", "");
    cfg.detuning_mode = require(laser, "detuning_mode", "laser.").get<std::string>();
    if (cfg.detuning_mode != "absolute_mhz" && cfg.detuning_mode != "offset_from_x_com_khz")
      throw validation_error("laser.detuning_mode must be 'absolute_mhz' or "
                             "'offset_from_x_com_khz'");
    cfg.detuning_value = require(laser, "value", "laser.").get<double>();

    const json& gates = require(document, "gates", "");
    if (!gates.is_array() || gates.empty())
      throw validation_error("'gates' must be a non-empty array");
    for (const json& g : gates) {
      ExperimentConfig::Gate gate;
      gate.ions = require(g, "ions", "gates[].").get<std::vector<int>>();
      const json& phases = require(g, "phases", "gates[].");
      if (phases.is_string() && phases.get<std::string>() == "maximal") {
        gate.maximal = true;
      } else if (phases.is_object()) {
        for (const auto& [key, value] : phases.items()) {
          const auto [a, b] = parse_pair_key(key);
          gate.phases_pi.emplace_back(a, b, value.get<double>());
        }
      } else {
        throw validation_error("gates[].phases must be \"maximal\" or a pair map");
      }
      cfg.gates.push_back(std::move(gate));
    }

    const json& drive = require(document, "drive", "");
    cfg.scheme_name = require(drive, "scheme", "drive.").get<std::string>();
    cfg.segments = require(drive, "segments", "drive.").get<int>();
    cfg.duration_us = require(drive, "duration_us", "drive.").get<double>();
    cfg.max_rabi_khz = require(drive, "max_rabi_khz", "drive.").get<double>();
    cfg.shared_groups =
        get_or<std::vector<std::vector<int>>>(drive, "shared_groups", {});
    cfg.robust = get_or<bool>(drive, "robust", false);
    cfg.pin_endpoints = get_or<bool>(drive, "pin_endpoints", false);
    if (drive.contains("slew")) {
      const json& slew = drive["slew"];
      cfg.slew_domega_khz = require(slew, "domega_khz", "drive.slew.").get<double>();
      cfg.slew_dphi_rad = require(slew, "dphi_rad", "drive.slew.").get<double>();
    }

    if (document.contains("optimizer")) {
      const json& opt = document["optimizer"];
      cfg.runs = get_or<int>(opt, "runs", 1);
      cfg.instances = get_or<int>(opt, "instances", 5);
      cfg.budget = get_or<int>(opt, "budget", 2000);
      cfg.tolerance = get_or<double>(opt, "tolerance", 1e-12);
      cfg.seed = get_or<std::uint64_t>(opt, "seed", 0);
      if (opt.contains("quality_threshold"))
        cfg.quality_threshold = opt["quality_threshold"].get<double>();
    }
    if (document.contains("thermal"))
      cfg.nbar = triple(require(document["thermal"], "nbar", "thermal."), "nbar");
    if (document.contains("outputs")) {
      const json& outputs = document["outputs"];
      cfg.output_directory = get_or<std::string>(outputs, "directory", "out");
      cfg.emit = get_or<std::vector<std::string>>(outputs, "emit", {});
      cfg.samples = get_or<int>(outputs, "samples", 400);
    }
    if (document.contains("scan")) cfg.scan_spec = document["scan"];
    if (document.contains("benchmark")) cfg.benchmark_spec = document["benchmark"];

    cfg.canonical = canonical_json(document);
    // fail fast on inconsistent physics inputs
    cfg.trap_chain().validate();
    cfg.gate_target().validate();
    cfg.scheme_config().validate(cfg.gate_target().addressed());
    if (!(cfg.duration_us > 0.0)) throw validation_error("drive.duration_us must be positive");
    if (cfg.samples < 2) throw validation_error("outputs.samples must be >= 2");
    return cfg;
  } catch (const json::exception& err) {
    throw validation_error(std::string("malformed config: ") + err.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config file: " + path);
  json document;
  try {
    in >> document;
  } catch (const json::exception& err) {
    throw validation_error(std::string("config is not valid JSON: ") + err.what());
  }
  return parse_config(document);
}

TrapChainConfig ExperimentConfig::trap_chain() const {
  TrapChainConfig trap;
  trap.n_ions = n_ions;
  trap.mass = units::amu_to_kg(mass_amu);
  for (int a = 0; a < 3; ++a)
    trap.com_frequencies[a] = units::mhz_to_rads(com_frequencies_mhz[a]);
  if (!(wavelength_nm > 0.0)) throw validation_error("wavevector wavelength must be positive");
  const double k0 = two_pi / (wavelength_nm * 1e-9);
  trap.raman_wavevector = Eigen::Vector3d(k0 * wavevector_direction[0],
                                          k0 * wavevector_direction[1],
                                          k0 * wavevector_direction[2]);
  return trap;
}

double ExperimentConfig::laser_detuning_rads() const {
  if (detuning_mode == "absolute_mhz") return units::mhz_to_rads(detuning_value);
  return units::mhz_to_rads(com_frequencies_mhz[0]) + units::khz_to_rads(detuning_value);
}

GateTarget ExperimentConfig::gate_target() const {
  GateTarget target;
  target.n_ions = n_ions;
  target.psi = Eigen::MatrixXd::Zero(n_ions, n_ions);
  Eigen::MatrixXi assigned = Eigen::MatrixXi::Zero(n_ions, n_ions);
  for (const auto& gate : gates) {
    if (gate.ions.size() < 2) throw validation_error("each gate needs at least two ions");
    std::vector<int> sorted = gate.ions;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw validation_error("gate lists an ion twice");
    for (int ion : sorted)
      if (ion < 0 || ion >= n_ions)
        throw validation_error("gate references an ion outside the chain");

    auto assign = [&](int a, int b, double value) {
      if (a == b) throw validation_error("gate pairs must couple distinct ions");
      if (assigned(a, b) && target.psi(a, b) != value)
        throw validation_error("conflicting target phases for one ion pair");
      assigned(a, b) = assigned(b, a) = 1;
      target.psi(a, b) = target.psi(b, a) = value;
    };
    if (gate.maximal) {
      for (size_t i = 0; i < sorted.size(); ++i)
        for (size_t j = i + 1; j < sorted.size(); ++j)
          assign(sorted[i], sorted[j], pi / 4.0);
    } else {
      for (const auto& [a, b, value_pi] : gate.phases_pi) {
        if (std::find(sorted.begin(), sorted.end(), a) == sorted.end() ||
            std::find(sorted.begin(), sorted.end(), b) == sorted.end())
          throw validation_error("explicit pair phase names an ion outside its gate");
        assign(a, b, value_pi * pi);
      }
    }
    target.gate_groups.push_back(sorted);
  }
  return target;
}

SchemeConfig ExperimentConfig::scheme_config() const {
  SchemeConfig scheme;
  scheme.modulation = modulation_from_name(scheme_name);
  scheme.segments = segments;
  scheme.shared_groups = shared_groups;
  scheme.robust = robust;
  scheme.max_rabi = units::khz_to_rads(max_rabi_khz);
  scheme.pin_endpoints = pin_endpoints;
  if (slew_domega_khz || slew_dphi_rad) {
    if (!slew_domega_khz || !slew_dphi_rad)
      throw validation_error("slew bounds need both domega_khz and dphi_rad");
    scheme.slew = SlewBounds{units::khz_to_rads(*slew_domega_khz), *slew_dphi_rad};
  }
  return scheme;
}

bool ExperimentConfig::emits(const std::string& kind) const {
  return std::find(emit.begin(), emit.end(), kind) != emit.end();
}

// ---------------------------------------------------------------------------
// drive.json
// ---------------------------------------------------------------------------

json drive_to_json(const DriveWaveform& drive) {
  json j;
  j["duration_s"] = drive.duration;
  j["boundaries_s"] = std::vector<double>(drive.boundaries.begin(), drive.boundaries.end());
  j["ions"] = drive.ions;
  json segments = json::array();
  for (int row = 0; row < drive.n_ions(); ++row) {
    json entry;
    entry["ion"] = drive.ions[row];
    entry["omega_rad_s"] = std::vector<double>(drive.amplitudes.row(row).begin(),
                                               drive.amplitudes.row(row).end());
    entry["phi_rad"] =
        std::vector<double>(drive.phases.row(row).begin(), drive.phases.row(row).end());
    segments.push_back(std::move(entry));
  }
  j["segments"] = std::move(segments);
  if (drive.symmetric_source) {
    const auto& src = *drive.symmetric_source;
    json s;
    s["segments"] = src.segments;
    s["initial_phases"] =
        std::vector<double>(src.initial_phases.begin(), src.initial_phases.end());
    json amps = json::array(), incs = json::array();
    for (int row = 0; row < static_cast<int>(src.ions.size()); ++row) {
      amps.push_back(std::vector<double>(src.amplitudes.row(row).begin(),
                                         src.amplitudes.row(row).end()));
      incs.push_back(std::vector<double>(src.phase_increments.row(row).begin(),
                                         src.phase_increments.row(row).end()));
    }
    s["amplitudes"] = std::move(amps);
    s["phase_increments"] = std::move(incs);
    j["symmetric_source"] = std::move(s);
  }
  return j;
}

DriveWaveform drive_from_json(const json& j) {
  try {
    DriveWaveform drive;
    drive.duration = require(j, "duration_s", "drive.").get<double>();
    const auto boundaries =
        require(j, "boundaries_s", "drive.").get<std::vector<double>>();
    drive.boundaries =
        Eigen::Map<const Eigen::VectorXd>(boundaries.data(), boundaries.size());
    drive.ions = require(j, "ions", "drive.").get<std::vector<int>>();
    const json& segments = require(j, "segments", "drive.");
    const int n = static_cast<int>(drive.ions.size());
    const int s = static_cast<int>(boundaries.size()) - 1;
    if (static_cast<int>(segments.size()) != n)
      throw validation_error("drive file: segment blocks do not match the ion list");
    drive.amplitudes.resize(n, s);
    drive.phases.resize(n, s);
    for (int row = 0; row < n; ++row) {
      const json& entry = segments[row];
      if (require(entry, "ion", "drive.segments[].").get<int>() != drive.ions[row])
        throw validation_error("drive file: segment blocks out of order");
      const auto omega = entry["omega_rad_s"].get<std::vector<double>>();
      const auto phi = entry["phi_rad"].get<std::vector<double>>();
      if (static_cast<int>(omega.size()) != s || static_cast<int>(phi.size()) != s)
        throw validation_error("drive file: segment arrays have the wrong length");
      for (int k = 0; k < s; ++k) {
        drive.amplitudes(row, k) = omega[k];
        drive.phases(row, k) = phi[k];
      }
    }
    if (j.contains("symmetric_source")) {
      const json& src = j["symmetric_source"];
      auto half = std::make_shared<SymmetricHalfDrive>();
      half->duration = drive.duration;
      half->segments = src["segments"].get<int>();
      half->ions = drive.ions;
      const auto init = src["initial_phases"].get<std::vector<double>>();
      half->initial_phases = Eigen::Map<const Eigen::VectorXd>(init.data(), init.size());
      const json& amps = src["amplitudes"];
      const json& incs = src["phase_increments"];
      half->amplitudes.resize(n, half->half_amplitude_count());
      half->phase_increments.resize(n, half->half_increment_count());
      for (int row = 0; row < n; ++row) {
        const auto a = amps[row].get<std::vector<double>>();
        const auto d = incs[row].get<std::vector<double>>();
        for (int k = 0; k < half->half_amplitude_count(); ++k)
          half->amplitudes(row, k) = a.at(k);
        for (int k = 0; k < half->half_increment_count(); ++k)
          half->phase_increments(row, k) = d.at(k);
      }
      drive.symmetric_source = half;
    }
    drive.validate_shape();
    return drive;
  } catch (const json::exception& err) {
    throw validation_error(std::string("malformed drive file: ") + err.what());
  }
}

void save_drive(const DriveWaveform& drive, const std::string& path) {
  write_text_file(path, canonical_json(drive_to_json(drive)));
}

DriveWaveform load_drive(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open drive file: " + path);
  json document;
  try {
    in >> document;
  } catch (const json::exception& err) {
    throw validation_error(std::string("drive file is not valid JSON: ") + err.what());
  }
  return drive_from_json(document);
}

json report_to_json(const OptimizationResult& result, const FidelityReport& fidelity,
                    const ExperimentConfig& config, int threads) {
  json j;
  j["infidelity"] = result.operational_infidelity;
  j["fidelity"] = fidelity.fidelity;
  j["cost"] = {{"phase_term", result.final_cost.phase_term},
               {"motion_term", result.final_cost.motion_term},
               {"com_term", result.final_cost.com_term},
               {"total", result.final_cost.total()}};
  j["motional_term"] = fidelity.motional_term;
  j["wall_time_s"] = result.wall_time_s;
  j["seed"] = result.seed;
  j["threads"] = threads;
  j["best_instance"] = result.best_instance;
  json instances = json::array();
  for (const auto& inst : result.instances) {
    instances.push_back({{"index", inst.index},
                         {"final_cost", inst.final_cost},
                         {"iterations", inst.iterations},
                         {"converged", inst.converged},
                         {"diverged", inst.diverged}});
  }
  j["instances"] = std::move(instances);
  j["config_echo"] = json::parse(config.canonical);
  return j;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::ofstream open_for_write(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw validation_error("cannot open output file: " + path);
  return out;
}

} // namespace

void write_text_file(const std::string& path, const std::string& contents) {
  auto out = open_for_write(path);
  out << contents;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_scan_csv(const ScanResult& scan, const std::string& path) {
  auto out = open_for_write(path);
  out << scan.axis_name;
  for (const auto& [name, values] : scan.columns) out << ',' << name;
  out << '\n';
  for (size_t i = 0; i < scan.axis.size(); ++i) {
    out << format_double(scan.axis[i]);
    for (const auto& [name, values] : scan.columns)
      out << ',' << format_double(values.at(i));
    out << '\n';
  }
}

void write_trajectory_csv(const TrajectorySeries& series, const DriveWaveform& drive,
                          const ModeData& modes, const std::string& path) {
  auto out = open_for_write(path);
  out << "time_s,mode,axis,mode_freq_mhz,ion,re,im\n";
  const int n = drive.n_ions();
  const int m = modes.n_modes();
  Eigen::MatrixXd eta(n, m);
  for (int j = 0; j < n; ++j) eta.row(j) = modes.lamb_dicke.row(drive.ions[j]);
  for (size_t i = 0; i < series.times.size(); ++i) {
    const auto& alpha = series.alpha[i];
    for (int p = 0; p < m; ++p) {
      Complex aggregate{0.0, 0.0};
      for (int j = 0; j < n; ++j) {
        out << format_double(series.times[i]) << ',' << p << ','
            << axis_name(modes.axes[p]) << ','
            << format_double(units::rads_to_mhz(modes.frequencies[p])) << ','
            << drive.ions[j] << ',' << format_double(alpha(j, p).real()) << ','
            << format_double(alpha(j, p).imag()) << '\n';
        aggregate += eta(j, p) * alpha(j, p);
      }
      // eta-weighted sum over ions: the collective displacement of the mode
      out << format_double(series.times[i]) << ',' << p << ','
          << axis_name(modes.axes[p]) << ','
          << format_double(units::rads_to_mhz(modes.frequencies[p])) << ",sum,"
          << format_double(aggregate.real()) << ',' << format_double(aggregate.imag())
          << '\n';
    }
  }
}

void write_phase_csv(const PhaseSeries& series, const DriveWaveform& drive,
                     const GateTarget& target, const std::string& path) {
  auto out = open_for_write(path);
  out << "time_s,ion_j,ion_k,phase_rad,target_rad\n";
  const int n = drive.n_ions();
  for (size_t i = 0; i < series.times.size(); ++i) {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        out << format_double(series.times[i]) << ',' << drive.ions[a] << ','
            << drive.ions[b] << ',' << format_double(series.phases[i](a, b)) << ','
            << format_double(target.psi(drive.ions[a], drive.ions[b])) << '\n';
      }
    }
  }
}

void write_cost_history_csv(const OptimizationResult& result, const std::string& path) {
  auto out = open_for_write(path);
  out << "instance,iteration,cost\n";
  for (const auto& inst : result.instances) {
    for (size_t i = 0; i < inst.cost_history.size(); ++i)
      out << inst.index << ',' << i << ',' << format_double(inst.cost_history[i]) << '\n';
  }
}

} // namespace ionpulse
