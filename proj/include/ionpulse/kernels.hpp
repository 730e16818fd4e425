#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "ionpulse/chain.hpp"
#include "ionpulse/control.hpp"

namespace ionpulse {

using Complex = std::complex<double>;

// Closed-form primitives for one segment of length h at detuning d. All three
// switch to a convergent series for small |d * h|, where the closed forms
// cancel catastrophically.
namespace segment_integrals {

// int_0^h exp(i d s) ds
Complex exp_moment0(double d, double h);

// int_0^h s exp(i d s) ds
Complex exp_moment1(double d, double h);

// int_0^h ds int_0^s exp(i d (s - s')) ds'  (time-ordered double integral of
// the oscillating factor over one segment; also the plain nested integral
// int_0^h ds int_0^s exp(i d s') ds' up to the exp(i d a) prefactor)
Complex triangle(double d, double h);

} // namespace segment_integrals

// Precomputed kernel matrices on a fixed segment grid for a fixed mode set.
// Entries are stored in scaled time (units of the grid duration) so they stay
// O(1); the evaluation methods convert at the boundary. Immutable after
// construction and safe to share across threads.
class KernelSet {
 public:
  static KernelSet build(const ModeData& modes, double duration,
                         const Eigen::VectorXd& boundaries_s,
                         const std::vector<int>& addressed_ions);
  static KernelSet build_uniform(const ModeData& modes, double duration,
                                 int segments, const std::vector<int>& addressed_ions);

  // Rebuilds with every relative detuning shifted by the same offset (rad/s).
  KernelSet with_detuning_offset(double offset) const;
  // Per-mode offsets (rad/s).
  KernelSet with_detuning_offsets(const Eigen::VectorXd& offsets) const;
  // Rebuilds on a uniformly stretched grid (same drive values apply).
  KernelSet with_time_stretch(double factor) const;

  // Displacement kernel at shifted detunings, without rebuilding P and R;
  // used by frequency-resolved susceptibility evaluations.
  Eigen::MatrixXcd shifted_displacement_kernel(double offset) const;

  int n_modes() const { return static_cast<int>(modes_.frequencies.size()); }
  int n_segments() const { return static_cast<int>(scaled_grid_.size()) - 1; }
  int n_addressed() const { return static_cast<int>(ions_.size()); }
  double duration() const { return duration_; }
  const Eigen::VectorXd& boundaries() const { return boundaries_; }
  const std::vector<int>& ions() const { return ions_; }
  const ModeData& modes() const { return modes_; }
  const Eigen::MatrixXd& lamb_dicke() const { return eta_; } // addressed x modes

  const Eigen::MatrixXcd& displacement_kernel() const { return m_; } // modes x S
  const Eigen::MatrixXcd& com_kernel() const { return r_; }          // modes x S
  const Eigen::MatrixXcd& t_weighted_kernel() const { return w_; }   // modes x S
  // Phase kernel for an addressed pair, indexed by positions in ions().
  const Eigen::MatrixXcd& pair_phase_kernel(int a, int b) const;     // S x S

  // Scaled control matrix gamma~ = duration * Omega * exp(i phi), addressed x S.
  Eigen::MatrixXcd scaled_controls(const DriveWaveform& drive) const;

  // alpha_j^p(tau) for every addressed ion and mode (dimensionless).
  Eigen::MatrixXcd displacements(const DriveWaveform& drive) const;

  // Summed pair phases phi_mn + phi_nm, addressed x addressed symmetric.
  Eigen::MatrixXd entangling_phases(const DriveWaveform& drive) const;

  // int_0^tau alpha_j^p(t) dt per addressed ion and mode (seconds); zero means
  // the phase-space trajectory is first-order insensitive to dephasing.
  Eigen::MatrixXcd com_residuals(const DriveWaveform& drive) const;

  // int_0^tau t (gamma_j(t)/2) exp(i delta_p t) dt (seconds); the t-weighted
  // closure integral entering first-order detuning-error expansions.
  Eigen::MatrixXcd t_weighted_integrals(const DriveWaveform& drive) const;

  // Throws validation_error unless the drive shares this kernel grid.
  void check_grid(const DriveWaveform& drive) const;

 private:
  int pair_offset(int a, int b) const;

  ModeData modes_;
  std::vector<int> ions_;
  double duration_ = 0.0;
  Eigen::VectorXd boundaries_;  // seconds
  Eigen::VectorXd scaled_grid_; // boundaries / duration
  Eigen::MatrixXd eta_;         // addressed x modes
  Eigen::MatrixXcd m_, r_, w_;
  std::vector<Eigen::MatrixXcd> p_; // one S x S block per addressed pair a < b
};

// Piecewise-exact time series of the phase-space trajectories alpha_j^p(t)
// and of the summed pair phases. Sample times must lie in [0, duration].
struct TrajectorySeries {
  std::vector<double> times;
  std::vector<Eigen::MatrixXcd> alpha; // per time: addressed x modes
};

struct PhaseSeries {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> phases; // per time: addressed x addressed
};

TrajectorySeries trajectory_series(const DriveWaveform& drive, const ModeData& modes,
                                   const std::vector<double>& times);
PhaseSeries phase_series(const DriveWaveform& drive, const ModeData& modes,
                         const std::vector<double>& times);

} // namespace ionpulse
