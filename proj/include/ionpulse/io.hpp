#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ionpulse/analysis.hpp"
#include "ionpulse/chain.hpp"
#include "ionpulse/control.hpp"
#include "ionpulse/optimizer.hpp"
#include "ionpulse/units.hpp"

namespace ionpulse {

using json = nlohmann::json;

// Experiment description as read from a JSON config file. Field names embed
// their units; the accessors convert to SI angular units.
struct ExperimentConfig {
  // trap
  int n_ions = 0;
  double mass_amu = 0.0;
  std::array<double, 3> com_frequencies_mhz{{0.0, 0.0, 0.0}};
  double wavelength_nm = 0.0;
  std::array<double, 3> wavevector_direction{{0.0, 0.0, 0.0}};
  // laser: "absolute_mhz" or "offset_from_x_com_khz"
  std::string detuning_mode;
  double detuning_value = 0.0;
  // gates
  struct Gate {
    std::vector<int> ions;
    bool maximal = false;
    // explicit pair targets in units of pi
    std::vector<std::tuple<int, int, double>> phases_pi;
  };
  std::vector<Gate> gates;
  // drive
  std::string scheme_name = "ampm";
  int segments = 1;
  double duration_us = 0.0;
  double max_rabi_khz = 0.0;
  std::vector<std::vector<int>> shared_groups;
  bool robust = false;
  bool pin_endpoints = false;
  std::optional<double> slew_domega_khz;
  std::optional<double> slew_dphi_rad;
  // optimizer
  int runs = 1;
  int instances = 5;
  int budget = 2000;
  double tolerance = 1e-12;
  std::uint64_t seed = 0;
  std::optional<double> quality_threshold;
  // thermal
  std::array<double, 3> nbar{{0.0, 0.0, 0.0}};
  // outputs
  std::string output_directory = "out";
  std::vector<std::string> emit;
  int samples = 400;
  // raw scan / benchmark specs (interpreted by the CLI)
  json scan_spec;
  json benchmark_spec;
  // canonicalized echo of the whole document
  std::string canonical;

  TrapChainConfig trap_chain() const;
  double laser_detuning_rads() const; // resolves offset_from_x_com against the trap
  GateTarget gate_target() const;
  SchemeConfig scheme_config() const;
  double duration_s() const { return units::us_to_s(duration_us); }
  std::array<double, 3> mean_phonons_per_axis() const { return nbar; }
  bool emits(const std::string& kind) const;
};

ExperimentConfig parse_config(const json& document);
ExperimentConfig load_config(const std::string& path);

// Canonical form: parsed and re-serialized with sorted keys and 2-space indent.
std::string canonical_json(const json& document);

// drive.json round trip
json drive_to_json(const DriveWaveform& drive);
DriveWaveform drive_from_json(const json& document);
void save_drive(const DriveWaveform& drive, const std::string& path);
DriveWaveform load_drive(const std::string& path);

// report.json
json report_to_json(const OptimizationResult& result, const FidelityReport& fidelity,
                    const ExperimentConfig& config, int threads);

// CSV writers; every file starts with a self-describing header row.
void write_scan_csv(const ScanResult& scan, const std::string& path);
void write_trajectory_csv(const TrajectorySeries& series, const DriveWaveform& drive,
                          const ModeData& modes, const std::string& path);
void write_phase_csv(const PhaseSeries& series, const DriveWaveform& drive,
                     const GateTarget& target, const std::string& path);
void write_cost_history_csv(const OptimizationResult& result, const std::string& path);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

} // namespace ionpulse
