#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ionpulse/control.hpp"
#include "ionpulse/kernels.hpp"

namespace ionpulse {

// Operational fidelity of a drive against its target, second order in the
// phase errors eps_jk = psi_jk - (phi_jk + phi_kj) and the residual
// displacements, with the motion traced out over a thermal product state.
struct FidelityReport {
  double infidelity = 0.0;
  double fidelity = 1.0;
  Eigen::MatrixXd phase_errors;       // addressed x addressed, eps_jk
  double phase_product = 1.0;         // prod cos(eps_jk) over addressed pairs
  double motional_term = 0.0;         // sum eta^2 |alpha|^2 (nbar + 1/2)
  Eigen::VectorXd per_mode_motional;  // contribution per mode
};

FidelityReport operational_infidelity(const DriveWaveform& drive, const KernelSet& kernels,
                                      const GateTarget& target);
// Override the mean phonon numbers stored with the kernels' mode data.
FidelityReport operational_infidelity(const DriveWaveform& drive, const KernelSet& kernels,
                                      const GateTarget& target,
                                      const Eigen::VectorXd& mean_phonons);

struct ScanResult {
  std::string axis_name;
  std::vector<double> axis; // strictly monotone
  std::vector<std::pair<std::string, std::vector<double>>> columns;

  const std::vector<double>& column(const std::string& name) const;
};

// Infidelity under a common quasi-static shift of every relative detuning
// (laser-detuning error); kernels are rebuilt per offset so both displacement
// and phase terms respond.
ScanResult quasi_static_detuning_scan(const DriveWaveform& drive, const KernelSet& kernels,
                                      const GateTarget& target,
                                      const std::vector<double>& offsets);

// Per-mode-offset variant (one row of offsets per scan point).
ScanResult per_mode_detuning_scan(const DriveWaveform& drive, const KernelSet& kernels,
                                  const GateTarget& target,
                                  const std::vector<double>& axis,
                                  const std::vector<Eigen::VectorXd>& offsets);

// Uniform time-scaling error: every control stretched by (1 + eps_t),
// evaluated by stretching the grid.
double timing_error_infidelity(const DriveWaveform& drive, const KernelSet& kernels,
                               const GateTarget& target, double eps_t);
ScanResult timing_error_scan(const DriveWaveform& drive, const KernelSet& kernels,
                             const GateTarget& target, const std::vector<double>& values);

// Quasi-static amplitude error Omega -> s * Omega.
ScanResult amplitude_error_scan(const DriveWaveform& drive, const KernelSet& kernels,
                                const GateTarget& target, const std::vector<double>& scales);

// Frequency-resolved first-order susceptibility of the residual displacements
// to detuning noise of unit amplitude, averaged over the noise phase. The
// zero-frequency limit reproduces the quasi-static sensitivity (the t-weighted
// closure integral). Values carry units of s^2.
ScanResult filter_function(const DriveWaveform& drive, const KernelSet& kernels,
                           const std::vector<double>& omegas);
double filter_function_zero_limit(const DriveWaveform& drive, const KernelSet& kernels);

// First-order response to an asymmetry eps_delta between the two bichromatic
// detunings: the plain closure integral and the t-weighted closure integral
// per addressed ion and mode.
struct AsymmetricDetuningReport {
  double eps_delta = 0.0;
  Eigen::MatrixXcd closure_integrals;    // addressed x modes (alpha at gate end)
  Eigen::MatrixXcd t_weighted_integrals; // addressed x modes, seconds
  double max_closure = 0.0;
  double max_t_weighted = 0.0;
  // max over ions/modes of |closure| + |eps_delta/2| * |t-weighted|
  double max_first_order_residual = 0.0;
};

AsymmetricDetuningReport asymmetric_detuning_sensitivity(const DriveWaveform& drive,
                                                         const KernelSet& kernels,
                                                         double eps_delta);

// Largest displacement-scale metric over ions and sample times:
// sqrt( sum_p eta^2 (2 nbar + 1)  +  4 sum_p eta^2 |eta alpha(t)|^2 ).
// Values approaching 1 mean the small-displacement expansion is breaking down.
struct LambDickeReport {
  double max_metric = 0.0;
  double threshold = 0.3;
  bool within = true;
  Eigen::VectorXd per_ion_max; // addressed ions
};

LambDickeReport lamb_dicke_diagnostic(const DriveWaveform& drive, const ModeData& modes,
                                      const std::vector<double>& times,
                                      double warn_threshold = 0.3);

} // namespace ionpulse
