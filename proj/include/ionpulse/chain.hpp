#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "ionpulse/errors.hpp"

namespace ionpulse {

enum class Axis : int { x = 0, y = 1, z = 2 };

const char* axis_name(Axis axis);

// Trap and addressing-laser geometry for a linear chain. All frequencies are
// angular (rad/s); configuration loaders convert from Hz-based units.
struct TrapChainConfig {
  int n_ions = 1;
  double mass = 0.0; // kg
  std::array<double, 3> com_frequencies{{0.0, 0.0, 0.0}}; // rad/s, [x, y, z]; z is the trap axis
  Eigen::Vector3d raman_wavevector = Eigen::Vector3d::Zero(); // rad/m, effective two-photon wavevector

  void validate() const;
};

// Minimum of the dimensionless chain potential
//   V(u) = sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|.
struct EquilibriumPositions {
  Eigen::VectorXd dimensionless; // u_i, strictly ascending
  double length_scale = 0.0;     // l = (q^2 / (4 pi eps0 m nu_z^2))^(1/3), meters
  double gradient_norm = 0.0;    // max-norm of dV/du at the solution

  Eigen::VectorXd physical() const { return length_scale * dimensionless; }
};

// Normal modes on one trap axis.
struct NormalModes {
  Axis axis = Axis::x;
  Eigen::VectorXd frequencies;  // rad/s, sorted descending (transverse COM first)
  Eigen::MatrixXd eigenvectors; // ions x modes, orthonormal columns b_j^(p)
};

// Modes coupled by the addressing laser, concatenated over axes with nonzero
// wavevector projection, with per-mode Lamb-Dicke couplings and relative
// detunings delta_p = nu_p - delta.
struct ModeData {
  Eigen::VectorXd frequencies;  // rad/s
  Eigen::MatrixXd eigenvectors; // ions x modes
  Eigen::MatrixXd lamb_dicke;   // ions x modes, eta_j^p
  std::vector<Axis> axes;       // axis tag per mode
  Eigen::VectorXd detunings;    // rad/s, delta_p
  Eigen::VectorXd mean_phonons; // nbar_p
  double laser_detuning = 0.0;  // rad/s

  int n_ions() const { return static_cast<int>(eigenvectors.rows()); }
  int n_modes() const { return static_cast<int>(frequencies.size()); }
};

// Dimensionless potential and derivatives (exposed for tests).
double chain_potential(const Eigen::VectorXd& u);
Eigen::VectorXd chain_potential_gradient(const Eigen::VectorXd& u);
Eigen::MatrixXd chain_potential_hessian(const Eigen::VectorXd& u);

// Damped Newton iteration from the uniform-spacing initial guess. Throws
// solver_error if the gradient max-norm does not reach 1e-12 within the
// iteration budget.
EquilibriumPositions equilibrium_positions(const TrapChainConfig& config);

// Diagonalizes the dimensionless Hessian on the requested axis. Throws
// validation_error if a transverse eigenvalue is non-positive (the linear
// chain is unstable at these trap frequencies).
NormalModes normal_modes(const TrapChainConfig& config,
                         const EquilibriumPositions& positions, Axis axis);

// Collects modes on every axis with nonzero wavevector projection and attaches
// Lamb-Dicke couplings eta_j^p = (k . e_axis) sqrt(hbar / (2 m nu_p)) b_j^(p)
// and relative detunings. Throws validation_error if no axis couples.
ModeData build_mode_data(const TrapChainConfig& config,
                         const EquilibriumPositions& positions,
                         double laser_detuning,
                         const std::array<double, 3>& mean_phonons_per_axis = {0.0, 0.0, 0.0});

} // namespace ionpulse
