#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "ionpulse/errors.hpp"

namespace ionpulse {

enum class Modulation { am, pm, ampm };

const char* modulation_name(Modulation m);
Modulation modulation_from_name(const std::string& name);

// Per-step rate-of-change bounds between adjacent segments.
struct SlewBounds {
  double max_amplitude_step = 0.0; // rad/s
  double max_phase_step = 0.0;     // rad
};

struct SchemeConfig {
  Modulation modulation = Modulation::ampm;
  int segments = 1;
  // Partition of the addressed set; every ion in a group reuses one variable
  // block. Empty means one group per addressed ion.
  std::vector<std::vector<int>> shared_groups;
  bool robust = false;
  double max_rabi = 0.0; // rad/s
  std::optional<SlewBounds> slew;
  // With slew bounds the amplitude chain is seeded at zero, so the first
  // segment is bounded by max_amplitude_step. Setting pin_endpoints also
  // bounds the final segment; this requires a robust scheme, where the
  // amplitude palindrome provides it.
  bool pin_endpoints = false;

  void validate(const std::vector<int>& addressed) const;
};

struct SymmetricHalfDrive;

// Piecewise-constant complex drive per addressed ion on a shared time grid.
// Un-addressed ions carry identically zero drive and are not stored.
struct DriveWaveform {
  double duration = 0.0;      // seconds
  Eigen::VectorXd boundaries; // S+1 entries, 0 = t_1 < ... < t_{S+1} = duration
  std::vector<int> ions;      // addressed ions, ascending global indices
  Eigen::MatrixXd amplitudes; // ions x S, rad/s, >= 0
  Eigen::MatrixXd phases;     // ions x S, rad
  // Present when the drive was produced by symmetric reflection; lets the
  // validator re-derive the waveform and certify the symmetry bitwise.
  std::shared_ptr<const SymmetricHalfDrive> symmetric_source;

  int segment_count() const { return static_cast<int>(amplitudes.cols()); }
  int n_ions() const { return static_cast<int>(ions.size()); }
  Eigen::MatrixXcd controls() const; // Omega * exp(i phi)
  void validate_shape() const;
};

// Half-specification of a midpoint-symmetric drive: amplitudes for the first
// ceil(S/2) segments and the first ceil((S-1)/2) phase increments.
struct SymmetricHalfDrive {
  double duration = 0.0;
  int segments = 0; // full segment count S
  std::vector<int> ions;
  Eigen::MatrixXd amplitudes;       // ions x ceil(S/2)
  Eigen::MatrixXd phase_increments; // ions x ceil((S-1)/2)
  Eigen::VectorXd initial_phases;   // per ion

  int half_amplitude_count() const { return (segments + 1) / 2; }
  int half_increment_count() const { return segments / 2; }
};

// Mirrors the half-specification about the gate midpoint on a uniform grid:
// the amplitude sequence becomes a palindrome and the phase-increment
// sequence mirrors. Reflection copies the stored values, so re-running it on
// the same input reproduces the waveform bitwise.
DriveWaveform reflect_symmetric(const SymmetricHalfDrive& half);

// Symmetric matrix of target entangling phases; zero for non-interacting
// pairs, including pairs that span different gate groups.
struct GateTarget {
  int n_ions = 0;
  Eigen::MatrixXd psi; // n x n symmetric, zero diagonal, radians
  std::vector<std::vector<int>> gate_groups;

  std::vector<int> addressed() const;
  void validate() const;
};

// Pure constraint report for a drive against a scheme.
struct ConstraintReport {
  double max_amplitude = 0.0;
  double max_amplitude_step = 0.0;
  double max_phase_step = 0.0; // wrapped to (-pi, pi]
  double start_amplitude = 0.0;
  double end_amplitude = 0.0;
  double amplitude_symmetry_residual = 0.0;
  double phase_symmetry_residual = 0.0;
  bool amplitude_ok = true;
  bool amplitude_step_ok = true;
  bool phase_step_ok = true;
  bool endpoint_ok = true;
  bool symmetry_ok = true;

  double amplitude_step_violation = 0.0; // max(0, step - bound)
  double phase_step_violation = 0.0;

  bool all_ok() const {
    return amplitude_ok && amplitude_step_ok && phase_step_ok && endpoint_ok &&
           symmetry_ok;
  }
};

ConstraintReport validate(const DriveWaveform& drive, const SchemeConfig& scheme);

// Differentiable map from free real variables to a drive waveform. Amplitude
// bounds use a logistic squash; slew bounds parametrize tanh-bounded per-step
// increments; robust schemes emit only the first half of each profile and
// reflect. Shared groups emit one variable block reused by every member ion.
class Parametrization {
 public:
  Parametrization(const SchemeConfig& scheme, std::vector<int> addressed,
                  double duration);

  int variable_count() const { return variable_count_; }
  const SchemeConfig& scheme() const { return scheme_; }
  const std::vector<int>& ions() const { return ions_; }
  double duration() const { return duration_; }

  DriveWaveform drive(const Eigen::VectorXd& theta) const;

  // Inverse of drive() for in-range waveforms; throws validation_error when a
  // value sits outside the open range of its squash.
  Eigen::VectorXd extract(const DriveWaveform& drive) const;

  // Chain rule: pulls per-segment cost sensitivities d C / d Omega and
  // d C / d phi (ions x S) back to the free variables.
  Eigen::VectorXd pullback(const Eigen::VectorXd& theta,
                           const Eigen::MatrixXd& cost_d_amplitude,
                           const Eigen::MatrixXd& cost_d_phase) const;

  // Seeded random start: squashed amplitudes uniform in [0.1, 0.9] of their
  // range, absolute phases uniform in (-pi, pi], bounded increments drawn
  // well inside their range.
  Eigen::VectorXd random_guess(std::mt19937_64& rng) const;

 private:
  struct Group {
    std::vector<int> rows;  // rows of the member ions in the drive matrices
    int amp_offset = 0;
    int amp_count = 0;
    int phase_offset = 0;
    int phase_count = 0;
  };

  int amp_profile_length() const;   // free amplitude slots per group
  int phase_increment_count() const;

  // forward/backward helpers for one group
  void amplitude_profile(const Eigen::VectorXd& vars, Eigen::VectorXd& profile,
                         Eigen::VectorXd* chain_positions) const;
  Eigen::VectorXd phase_profile(const Eigen::VectorXd& vars) const;

  SchemeConfig scheme_;
  std::vector<int> ions_;
  double duration_ = 0.0;
  std::vector<Group> groups_;
  int variable_count_ = 0;
  double amp_chain_scale_ = 0.0;  // increment bound in squash space
  double start_amplitude_cap_ = 0.0;
};

} // namespace ionpulse
