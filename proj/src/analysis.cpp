#include "ionpulse/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "ionpulse/units.hpp"

namespace ionpulse {

namespace {

Eigen::MatrixXd addressed_targets(const KernelSet& kernels, const GateTarget& target) {
  target.validate();
  const auto& ions = kernels.ions();
  const int n = static_cast<int>(ions.size());
  Eigen::MatrixXd psi(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) psi(a, b) = target.psi(ions[a], ions[b]);
  return psi;
}

FidelityReport fidelity_from_evaluations(const Eigen::MatrixXcd& alpha,
                                         const Eigen::MatrixXd& phases,
                                         const Eigen::MatrixXd& psi,
                                         const Eigen::MatrixXd& eta,
                                         const Eigen::VectorXd& mean_phonons) {
  const int n = static_cast<int>(alpha.rows());
  const int m = static_cast<int>(alpha.cols());
  FidelityReport report;
  report.phase_errors = Eigen::MatrixXd::Zero(n, n);
  report.per_mode_motional = Eigen::VectorXd::Zero(m);

  double product = 1.0;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const double eps = psi(a, b) - phases(a, b);
      report.phase_errors(a, b) = report.phase_errors(b, a) = eps;
      product *= std::cos(eps);
    }
  }
  for (int p = 0; p < m; ++p) {
    double term = 0.0;
    for (int j = 0; j < n; ++j) {
      const double eta2 = eta(j, p) * eta(j, p);
      term += eta2 * std::norm(alpha(j, p)) * (mean_phonons[p] + 0.5);
    }
    report.per_mode_motional[p] = term;
    report.motional_term += term;
  }
  report.phase_product = product;
  // second-order expansion; the motional factor is floored at zero so the
  // fidelity stays in [0, 1] outside the expansion's domain
  const double motional_factor = std::max(1.0 - report.motional_term, 0.0);
  report.fidelity = product * product * motional_factor * motional_factor;
  report.infidelity = std::clamp(1.0 - report.fidelity, 0.0, 1.0);
  return report;
}

FidelityReport evaluate(const DriveWaveform& drive, const KernelSet& kernels,
                        const Eigen::MatrixXd& psi, const Eigen::VectorXd& mean_phonons) {
  return fidelity_from_evaluations(kernels.displacements(drive),
                                   kernels.entangling_phases(drive), psi,
                                   kernels.lamb_dicke(), mean_phonons);
}

} // namespace

FidelityReport operational_infidelity(const DriveWaveform& drive, const KernelSet& kernels,
                                      const GateTarget& target) {
  return operational_infidelity(drive, kernels, target, kernels.modes().mean_phonons);
}

FidelityReport operational_infidelity(const DriveWaveform& drive, const KernelSet& kernels,
                                      const GateTarget& target,
                                      const Eigen::VectorXd& mean_phonons) {
  if (mean_phonons.size() != kernels.n_modes())
    throw validation_error("mean phonon vector has the wrong length");
  if ((mean_phonons.array() < 0.0).any())
    throw validation_error("mean phonon numbers must be non-negative");
  return evaluate(drive, kernels, addressed_targets(kernels, target), mean_phonons);
}

const std::vector<double>& ScanResult::column(const std::string& name) const {
  for (const auto& [label, values] : columns)
    if (label == name) return values;
  throw validation_error("scan has no column named " + name);
}

namespace {

void require_monotone(const std::vector<double>& axis) {
  for (size_t i = 1; i < axis.size(); ++i)
    if (!(axis[i] > axis[i - 1]))
      throw validation_error("scan axis must be strictly increasing");
}

void push_report(ScanResult& scan, const FidelityReport& report) {
  scan.columns[0].second.push_back(report.infidelity);
  scan.columns[1].second.push_back(report.motional_term);
  scan.columns[2].second.push_back(1.0 - report.phase_product * report.phase_product);
}

ScanResult make_report_scan(const std::string& axis_name) {
  ScanResult scan;
  scan.axis_name = axis_name;
  scan.columns = {{"infidelity", {}}, {"motional_term", {}}, {"phase_error_term", {}}};
  return scan;
}

} // namespace

ScanResult quasi_static_detuning_scan(const DriveWaveform& drive, const KernelSet& kernels,
                                      const GateTarget& target,
                                      const std::vector<double>& offsets) {
  require_monotone(offsets);
  const Eigen::MatrixXd psi = addressed_targets(kernels, target);
  ScanResult scan = make_report_scan("detuning_offset_rads");
  scan.axis = offsets;
  for (double eps : offsets) {
    if (!std::isfinite(eps)) throw validation_error("detuning offsets must be finite");
    const KernelSet shifted = kernels.with_detuning_offset(eps);
    push_report(scan, evaluate(drive, shifted, psi, kernels.modes().mean_phonons));
  }
  return scan;
}

ScanResult per_mode_detuning_scan(const DriveWaveform& drive, const KernelSet& kernels,
                                  const GateTarget& target,
                                  const std::vector<double>& axis,
                                  const std::vector<Eigen::VectorXd>& offsets) {
  require_monotone(axis);
  if (axis.size() != offsets.size())
    throw validation_error("axis and per-mode offsets disagree in length");
  const Eigen::MatrixXd psi = addressed_targets(kernels, target);
  ScanResult scan = make_report_scan("detuning_offset_axis");
  scan.axis = axis;
  for (const auto& eps : offsets) {
    const KernelSet shifted = kernels.with_detuning_offsets(eps);
    push_report(scan, evaluate(drive, shifted, psi, kernels.modes().mean_phonons));
  }
  return scan;
}

double timing_error_infidelity(const DriveWaveform& drive, const KernelSet& kernels,
                               const GateTarget& target, double eps_t) {
  if (!(1.0 + eps_t > 0.0)) throw validation_error("timing error must keep 1 + eps_t > 0");
  const double factor = 1.0 + eps_t;
  const KernelSet stretched = kernels.with_time_stretch(factor);
  DriveWaveform stretched_drive = drive;
  stretched_drive.duration *= factor;
  stretched_drive.boundaries *= factor;
  stretched_drive.symmetric_source.reset();
  return operational_infidelity(stretched_drive, stretched, target).infidelity;
}

ScanResult timing_error_scan(const DriveWaveform& drive, const KernelSet& kernels,
                             const GateTarget& target, const std::vector<double>& values) {
  require_monotone(values);
  ScanResult scan;
  scan.axis_name = "timing_scale_error";
  scan.axis = values;
  scan.columns = {{"infidelity", {}}};
  for (double eps : values)
    scan.columns[0].second.push_back(timing_error_infidelity(drive, kernels, target, eps));
  return scan;
}

ScanResult amplitude_error_scan(const DriveWaveform& drive, const KernelSet& kernels,
                                const GateTarget& target, const std::vector<double>& scales) {
  require_monotone(scales);
  const Eigen::MatrixXd psi = addressed_targets(kernels, target);
  ScanResult scan = make_report_scan("amplitude_scale");
  scan.axis = scales;
  for (double s : scales) {
    if (!(s > 0.0)) throw validation_error("amplitude scales must be positive");
    DriveWaveform scaled = drive;
    scaled.amplitudes *= s;
    scaled.symmetric_source.reset();
    push_report(scan, evaluate(scaled, kernels, psi, kernels.modes().mean_phonons));
  }
  return scan;
}

namespace {

double displacement_susceptibility(const KernelSet& kernels, const Eigen::MatrixXcd& controls,
                                   const Eigen::MatrixXcd& alpha0, double omega) {
  // theta-averaged first-order displacement response at noise frequency omega
  const Eigen::MatrixXcd up = controls * kernels.shifted_displacement_kernel(omega).transpose();
  const Eigen::MatrixXcd um = controls * kernels.shifted_displacement_kernel(-omega).transpose();
  const Eigen::MatrixXd& eta = kernels.lamb_dicke();
  const Eigen::VectorXd& nbar = kernels.modes().mean_phonons;
  double sum = 0.0;
  for (int j = 0; j < kernels.n_addressed(); ++j) {
    for (int p = 0; p < kernels.n_modes(); ++p) {
      const double eta2 = eta(j, p) * eta(j, p);
      sum += eta2 * (nbar[p] + 0.5) *
             (std::norm(up(j, p) - alpha0(j, p)) + std::norm(um(j, p) - alpha0(j, p)));
    }
  }
  return sum / (4.0 * omega * omega);
}

} // namespace

double filter_function_zero_limit(const DriveWaveform& drive, const KernelSet& kernels) {
  const Eigen::MatrixXcd t_weighted = kernels.t_weighted_integrals(drive);
  const Eigen::MatrixXd& eta = kernels.lamb_dicke();
  const Eigen::VectorXd& nbar = kernels.modes().mean_phonons;
  double sum = 0.0;
  for (int j = 0; j < kernels.n_addressed(); ++j)
    for (int p = 0; p < kernels.n_modes(); ++p)
      sum += eta(j, p) * eta(j, p) * (nbar[p] + 0.5) * std::norm(t_weighted(j, p));
  return 0.5 * sum;
}

ScanResult filter_function(const DriveWaveform& drive, const KernelSet& kernels,
                           const std::vector<double>& omegas) {
  require_monotone(omegas);
  const Eigen::MatrixXcd controls = kernels.scaled_controls(drive);
  const Eigen::MatrixXcd alpha0 = controls * kernels.displacement_kernel().transpose();
  ScanResult scan;
  scan.axis_name = "noise_frequency_rads";
  scan.axis = omegas;
  scan.columns = {{"filter_function_s2", {}}};
  for (double omega : omegas) {
    if (omega < 0.0) throw validation_error("noise frequencies must be non-negative");
    scan.columns[0].second.push_back(
        omega == 0.0 ? filter_function_zero_limit(drive, kernels)
                     : displacement_susceptibility(kernels, controls, alpha0, omega));
  }
  return scan;
}

AsymmetricDetuningReport asymmetric_detuning_sensitivity(const DriveWaveform& drive,
                                                         const KernelSet& kernels,
                                                         double eps_delta) {
  AsymmetricDetuningReport report;
  report.eps_delta = eps_delta;
  report.closure_integrals = kernels.displacements(drive);
  report.t_weighted_integrals = kernels.t_weighted_integrals(drive);
  report.max_closure = report.closure_integrals.cwiseAbs().maxCoeff();
  report.max_t_weighted = report.t_weighted_integrals.cwiseAbs().maxCoeff();
  report.max_first_order_residual =
      (report.closure_integrals.cwiseAbs() +
       0.5 * std::abs(eps_delta) * report.t_weighted_integrals.cwiseAbs())
          .maxCoeff();
  return report;
}

LambDickeReport lamb_dicke_diagnostic(const DriveWaveform& drive, const ModeData& modes,
                                      const std::vector<double>& times,
                                      double warn_threshold) {
  const TrajectorySeries series = trajectory_series(drive, modes, times);
  const int n = drive.n_ions();
  const int m = modes.n_modes();
  Eigen::MatrixXd eta(n, m);
  for (int j = 0; j < n; ++j) eta.row(j) = modes.lamb_dicke.row(drive.ions[j]);

  Eigen::VectorXd thermal = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < m; ++p)
      thermal[j] += eta(j, p) * eta(j, p) * (2.0 * modes.mean_phonons[p] + 1.0);

  LambDickeReport report;
  report.threshold = warn_threshold;
  report.per_ion_max = Eigen::VectorXd::Zero(n);
  for (const auto& alpha : series.alpha) {
    for (int j = 0; j < n; ++j) {
      double coherent = 0.0;
      for (int p = 0; p < m; ++p) {
        const double eta2 = eta(j, p) * eta(j, p);
        coherent += 4.0 * eta2 * eta2 * std::norm(alpha(j, p));
      }
      report.per_ion_max[j] =
          std::max(report.per_ion_max[j], std::sqrt(thermal[j] + coherent));
    }
  }
  report.max_metric = n > 0 ? report.per_ion_max.maxCoeff() : 0.0;
  report.within = report.max_metric <= warn_threshold;
  return report;
}

} // namespace ionpulse
