#pragma once

// Shared fixtures for the test suites: the trap/laser parameters used across
// the scenarios plus random instance builders.

#include <random>
#include <vector>

#include "ionpulse/analysis.hpp"
#include "ionpulse/chain.hpp"
#include "ionpulse/control.hpp"
#include "ionpulse/kernels.hpp"
#include "ionpulse/optimizer.hpp"
#include "ionpulse/units.hpp"

namespace helpers {

using namespace ionpulse;

inline constexpr double yb_mass_amu = 171.0;

inline TrapChainConfig yb_trap(int n_ions, double fx_mhz = 1.6, double fy_mhz = 1.5,
                               double fz_mhz = 0.3) {
  TrapChainConfig trap;
  trap.n_ions = n_ions;
  trap.mass = units::amu_to_kg(yb_mass_amu);
  trap.com_frequencies = {units::mhz_to_rads(fx_mhz), units::mhz_to_rads(fy_mhz),
                          units::mhz_to_rads(fz_mhz)};
  const double k0 = two_pi / 355e-9;
  trap.raman_wavevector = Eigen::Vector3d(k0, k0, 0.0);
  return trap;
}

// detuning 4.7 kHz above the x-axis COM frequency
inline double default_detuning(const TrapChainConfig& trap) {
  return trap.com_frequencies[0] + units::khz_to_rads(4.7);
}

struct Setup {
  TrapChainConfig trap;
  EquilibriumPositions positions;
  ModeData modes;
  GateTarget target;
  KernelSet kernels;
};

inline GateTarget maximal_pair_target(int n_ions, int a, int b) {
  GateTarget target;
  target.n_ions = n_ions;
  target.psi = Eigen::MatrixXd::Zero(n_ions, n_ions);
  target.psi(a, b) = target.psi(b, a) = pi / 4.0;
  target.gate_groups = {{a, b}};
  return target;
}

inline Setup pair_setup(int n_ions, int segments, double duration,
                        std::vector<int> gate_ions = {0, 1}) {
  Setup s{yb_trap(n_ions), {}, {}, {}, {}};
  s.positions = equilibrium_positions(s.trap);
  s.modes = build_mode_data(s.trap, s.positions, default_detuning(s.trap));
  s.target = maximal_pair_target(n_ions, gate_ions[0], gate_ions[1]);
  s.kernels = KernelSet::build_uniform(s.modes, duration, segments, s.target.addressed());
  return s;
}

// synthetic mode data with arbitrary couplings, for kernel-level tests
inline ModeData synthetic_modes(std::mt19937_64& rng, int n_ions, int n_modes,
                                double duration) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ModeData modes;
  modes.frequencies = Eigen::VectorXd::Constant(n_modes, units::mhz_to_rads(1.0));
  modes.eigenvectors = Eigen::MatrixXd::Zero(n_ions, n_modes);
  modes.lamb_dicke.resize(n_ions, n_modes);
  modes.detunings.resize(n_modes);
  modes.mean_phonons = Eigen::VectorXd::Zero(n_modes);
  modes.axes.assign(n_modes, Axis::x);
  for (int p = 0; p < n_modes; ++p) {
    // log-spread magnitudes so both the oscillatory and the near-resonant
    // (Taylor) branches of the segment primitives get exercised
    const double scaled = std::pow(10.0, -3.0 + 4.7 * unit(rng));
    modes.detunings[p] = (unit(rng) < 0.5 ? -1.0 : 1.0) * scaled / duration;
    for (int j = 0; j < n_ions; ++j)
      modes.lamb_dicke(j, p) = 0.2 * (2.0 * unit(rng) - 1.0);
  }
  return modes;
}

inline DriveWaveform random_drive(std::mt19937_64& rng, std::vector<int> ions,
                                  int segments, double duration, double omega_max,
                                  bool random_grid = false) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DriveWaveform drive;
  drive.duration = duration;
  drive.ions = std::move(ions);
  const int n = static_cast<int>(drive.ions.size());
  drive.boundaries.resize(segments + 1);
  if (random_grid) {
    Eigen::VectorXd cuts(segments + 1);
    cuts[0] = 0.0;
    for (int k = 1; k <= segments; ++k) cuts[k] = cuts[k - 1] + 0.05 + unit(rng);
    drive.boundaries = cuts * (duration / cuts[segments]);
    drive.boundaries[segments] = duration;
  } else {
    drive.boundaries = Eigen::VectorXd::LinSpaced(segments + 1, 0.0, duration);
    drive.boundaries[0] = 0.0;
    drive.boundaries[segments] = duration;
  }
  drive.amplitudes.resize(n, segments);
  drive.phases.resize(n, segments);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < segments; ++k) {
      drive.amplitudes(j, k) = omega_max * unit(rng);
      drive.phases(j, k) = -pi + two_pi * unit(rng);
    }
  }
  return drive;
}

inline OptimizationProblem make_problem(const Setup& setup, const SchemeConfig& scheme,
                                        std::uint64_t seed, int instances = 5,
                                        int budget = 2000, double tolerance = 1e-12) {
  OptimizationProblem problem;
  problem.kernels = &setup.kernels;
  problem.target = setup.target;
  problem.scheme = scheme;
  problem.instance_count = instances;
  problem.iteration_budget = budget;
  problem.tolerance = tolerance;
  problem.rng_seed = seed;
  return problem;
}

} // namespace helpers
