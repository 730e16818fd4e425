#include "ionpulse/chain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ionpulse/units.hpp"

namespace ionpulse {

const char* axis_name(Axis axis) {
  switch (axis) {
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::z: return "z";
  }
  return "?";
}

void TrapChainConfig::validate() const {
  if (n_ions < 1) throw validation_error("n_ions must be >= 1");
  if (!(mass > 0.0)) throw validation_error("ion mass must be positive");
  for (double w : com_frequencies) {
    if (!(w > 0.0)) throw validation_error("trap frequencies must be positive");
  }
}

double chain_potential(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  double v = 0.5 * u.squaredNorm();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) v += 1.0 / std::abs(u[i] - u[j]);
  return v;
}

Eigen::VectorXd chain_potential_gradient(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::VectorXd g = u;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = u[i] - u[j];
      g[i] -= 1.0 / (d * std::abs(d));
    }
  }
  return g;
}

Eigen::MatrixXd chain_potential_hessian(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 1.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double inv3 = 1.0 / std::pow(std::abs(u[i] - u[j]), 3);
      diag += 2.0 * inv3;
      h(i, j) = -2.0 * inv3;
    }
    h(i, i) = diag;
  }
  return h;
}

namespace {

bool strictly_ascending(const Eigen::VectorXd& u) {
  for (int i = 0; i + 1 < u.size(); ++i)
    if (!(u[i] < u[i + 1])) return false;
  return true;
}

} // namespace

EquilibriumPositions equilibrium_positions(const TrapChainConfig& config) {
  config.validate();
  const int n = config.n_ions;
  const double nu_z = config.com_frequencies[2];
  const double q = constants::elementary_charge;
  const double scale = std::cbrt(q * q / (4.0 * pi * constants::vacuum_permittivity *
                                          config.mass * nu_z * nu_z));

  EquilibriumPositions result;
  result.length_scale = scale;
  if (n == 1) {
    result.dimensionless = Eigen::VectorXd::Zero(1);
    result.gradient_norm = 0.0;
    return result;
  }

  // Uniform spacing u_i proportional to (i - (N+1)/2); the prefactor is the
  // empirical minimum-spacing fit 2.018 / N^0.559 for Coulomb chains.
  Eigen::VectorXd u(n);
  const double spacing = 2.018 / std::pow(n, 0.559);
  for (int i = 0; i < n; ++i) u[i] = spacing * (i + 1 - 0.5 * (n + 1));

  const double tol = 1e-12;
  const int max_iter = 200;
  double gnorm = chain_potential_gradient(u).lpNorm<Eigen::Infinity>();
  for (int iter = 0; iter < max_iter && gnorm > tol; ++iter) {
    const Eigen::VectorXd g = chain_potential_gradient(u);
    const Eigen::MatrixXd h = chain_potential_hessian(u);
    Eigen::VectorXd step = h.ldlt().solve(-g);
    // damping: keep the ordering and require the gradient norm to shrink
    double alpha = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      Eigen::VectorXd trial = u + alpha * step;
      if (strictly_ascending(trial)) {
        const double trial_norm =
            chain_potential_gradient(trial).lpNorm<Eigen::Infinity>();
        if (trial_norm < gnorm) {
          u = trial;
          gnorm = trial_norm;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
  }

  if (gnorm > 1e-10) {
    std::ostringstream msg;
    msg << "equilibrium solve did not converge: gradient max-norm " << gnorm;
    throw solver_error(msg.str());
  }
  result.dimensionless = u;
  result.gradient_norm = gnorm;
  return result;
}

NormalModes normal_modes(const TrapChainConfig& config,
                         const EquilibriumPositions& positions, Axis axis) {
  config.validate();
  const int n = config.n_ions;
  const Eigen::VectorXd& u = positions.dimensionless;
  if (static_cast<int>(u.size()) != n)
    throw validation_error("equilibrium positions do not match n_ions");

  const double nu_z = config.com_frequencies[2];
  const double nu_a = config.com_frequencies[static_cast<int>(axis)];
  const double ratio2 = (nu_a / nu_z) * (nu_a / nu_z);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double coupling_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double inv3 = 1.0 / std::pow(std::abs(u[i] - u[j]), 3);
      coupling_sum += inv3;
      a(i, j) = (axis == Axis::z) ? -2.0 * inv3 : inv3;
    }
    a(i, i) = (axis == Axis::z) ? 1.0 + 2.0 * coupling_sum : ratio2 - coupling_sum;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success)
    throw solver_error("mode eigensolve failed");

  NormalModes modes;
  modes.axis = axis;
  modes.frequencies.resize(n);
  modes.eigenvectors.resize(n, n);
  // descending frequency; transverse COM lands first
  for (int p = 0; p < n; ++p) {
    const int src = n - 1 - p;
    const double lambda = solver.eigenvalues()[src];
    if (axis != Axis::z && !(lambda > 0.0)) {
      std::ostringstream msg;
      msg << "linear chain unstable on the " << axis_name(axis)
          << " axis (non-positive mode stiffness " << lambda
          << "); raise the transverse trap frequency";
      throw validation_error(msg.str());
    }
    modes.frequencies[p] = nu_z * std::sqrt(lambda);
    Eigen::VectorXd vec = solver.eigenvectors().col(src);
    // deterministic sign: make the sum positive, falling back to the first
    // nonzero component for antisymmetric modes
    double s = vec.sum();
    if (std::abs(s) < 1e-9) {
      for (int i = 0; i < n; ++i) {
        if (std::abs(vec[i]) > 1e-12) { s = vec[i]; break; }
      }
    }
    if (s < 0.0) vec = -vec;
    modes.eigenvectors.col(p) = vec;
  }
  return modes;
}

ModeData build_mode_data(const TrapChainConfig& config,
                         const EquilibriumPositions& positions,
                         double laser_detuning,
                         const std::array<double, 3>& mean_phonons_per_axis) {
  config.validate();
  const int n = config.n_ions;

  std::vector<Axis> coupled;
  for (Axis axis : {Axis::x, Axis::y, Axis::z}) {
    if (config.raman_wavevector[static_cast<int>(axis)] != 0.0) coupled.push_back(axis);
  }
  if (coupled.empty())
    throw validation_error("wavevector has no projection on any trap axis: no coupling possible");

  const int m = n * static_cast<int>(coupled.size());
  ModeData data;
  data.frequencies.resize(m);
  data.eigenvectors.resize(n, m);
  data.lamb_dicke.resize(n, m);
  data.detunings.resize(m);
  data.mean_phonons.resize(m);
  data.axes.resize(m);
  data.laser_detuning = laser_detuning;

  int col = 0;
  for (Axis axis : coupled) {
    const NormalModes modes = normal_modes(config, positions, axis);
    const double k_proj = config.raman_wavevector[static_cast<int>(axis)];
    const double nbar = mean_phonons_per_axis[static_cast<int>(axis)];
    for (int p = 0; p < n; ++p, ++col) {
      const double nu = modes.frequencies[p];
      data.frequencies[col] = nu;
      data.eigenvectors.col(col) = modes.eigenvectors.col(p);
      data.lamb_dicke.col(col) =
          k_proj * std::sqrt(constants::hbar / (2.0 * config.mass * nu)) *
          modes.eigenvectors.col(p);
      data.detunings[col] = nu - laser_detuning;
      data.mean_phonons[col] = nbar;
      data.axes[col] = axis;
    }
  }
  return data;
}

} // namespace ionpulse
