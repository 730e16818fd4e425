#include "ionpulse/control.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ionpulse/units.hpp"

namespace ionpulse {

const char* modulation_name(Modulation m) {
  switch (m) {
    case Modulation::am: return "am";
    case Modulation::pm: return "pm";
    case Modulation::ampm: return "ampm";
  }
  return "?";
}

Modulation modulation_from_name(const std::string& name) {
  if (name == "am") return Modulation::am;
  if (name == "pm") return Modulation::pm;
  if (name == "ampm") return Modulation::ampm;
  throw validation_error("unknown modulation scheme: " + name);
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double sigmoid_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

double logit(double y) {
  if (!(y > 0.0 && y < 1.0)) throw validation_error("value outside the open squash range");
  return std::log(y / (1.0 - y));
}

// logit(r * sigmoid(x)) without underflow for large |x|; r in (0, 1]
double scaled_logit_of_sigmoid(double r, double x) {
  if (r == 1.0) return x;
  const double log_sig = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  return std::log(r) + log_sig - std::log1p(-r * sigmoid(x));
}

// d/dx of the above: (1 - sigmoid(x)) / (1 - r * sigmoid(x))
double scaled_logit_of_sigmoid_slope(double r, double x) {
  const double s = sigmoid(x);
  return (1.0 - s) / (1.0 - r * s);
}

} // namespace

void SchemeConfig::validate(const std::vector<int>& addressed) const {
  if (segments < 1) throw validation_error("segment count must be >= 1");
  if (!(max_rabi > 0.0)) throw validation_error("max_rabi must be positive");
  if (slew) {
    if (!(slew->max_amplitude_step > 0.0) || !(slew->max_phase_step > 0.0))
      throw validation_error("slew bounds must be positive");
  }
  if (pin_endpoints) {
    if (!slew) throw validation_error("pin_endpoints requires slew bounds");
    if (!robust)
      throw validation_error(
          "pin_endpoints requires a robust scheme (the amplitude palindrome "
          "bounds the final segment)");
  }
  if (!shared_groups.empty()) {
    std::set<int> seen;
    std::set<int> target(addressed.begin(), addressed.end());
    for (const auto& group : shared_groups) {
      if (group.empty()) throw validation_error("empty shared group");
      for (int ion : group) {
        if (!target.count(ion))
          throw validation_error("shared group references an un-addressed ion");
        if (!seen.insert(ion).second)
          throw validation_error("shared groups must not overlap");
      }
    }
    if (seen.size() != target.size())
      throw validation_error("shared groups must cover every addressed ion");
  }
}

Eigen::MatrixXcd DriveWaveform::controls() const {
  Eigen::MatrixXcd u(amplitudes.rows(), amplitudes.cols());
  for (Eigen::Index j = 0; j < amplitudes.rows(); ++j)
    for (Eigen::Index k = 0; k < amplitudes.cols(); ++k)
      u(j, k) = std::polar(amplitudes(j, k), phases(j, k));
  return u;
}

void DriveWaveform::validate_shape() const {
  const int s = segment_count();
  if (s < 1) throw validation_error("drive has no segments");
  if (boundaries.size() != s + 1)
    throw validation_error("boundary count does not match segment count");
  if (std::abs(boundaries[0]) > 1e-15 * std::max(1.0, duration))
    throw validation_error("drive must start at t = 0");
  if (std::abs(boundaries[s] - duration) > 1e-12 * std::max(1.0, duration))
    throw validation_error("last boundary must equal the drive duration");
  for (int k = 0; k < s; ++k)
    if (!(boundaries[k] < boundaries[k + 1]))
      throw validation_error("segment boundaries must be strictly increasing");
  if (phases.rows() != amplitudes.rows() || phases.cols() != amplitudes.cols())
    throw validation_error("amplitude and phase matrices disagree in shape");
  if (static_cast<int>(ions.size()) != amplitudes.rows())
    throw validation_error("ion list does not match drive rows");
  if (!std::is_sorted(ions.begin(), ions.end()) ||
      std::adjacent_find(ions.begin(), ions.end()) != ions.end())
    throw validation_error("addressed ions must be sorted and unique");
  if ((amplitudes.array() < 0.0).any())
    throw validation_error("drive amplitudes must be non-negative");
}

DriveWaveform reflect_symmetric(const SymmetricHalfDrive& half) {
  const int s = half.segments;
  if (s < 1) throw validation_error("segment count must be >= 1");
  const int n = static_cast<int>(half.ions.size());
  if (half.amplitudes.rows() != n || half.amplitudes.cols() != half.half_amplitude_count())
    throw validation_error("half amplitudes have the wrong shape");
  if (half.phase_increments.rows() != n ||
      half.phase_increments.cols() != half.half_increment_count())
    throw validation_error("half phase increments have the wrong shape");
  if (half.initial_phases.size() != n)
    throw validation_error("initial phases have the wrong shape");

  DriveWaveform drive;
  drive.duration = half.duration;
  drive.ions = half.ions;
  drive.boundaries = Eigen::VectorXd::LinSpaced(s + 1, 0.0, half.duration);
  drive.boundaries[0] = 0.0;
  drive.boundaries[s] = half.duration;
  drive.amplitudes.resize(n, s);
  drive.phases.resize(n, s);
  for (int k = 0; k < s; ++k)
    drive.amplitudes.col(k) = half.amplitudes.col(std::min(k, s - 1 - k));
  for (int j = 0; j < n; ++j) {
    double phi = half.initial_phases[j];
    drive.phases(j, 0) = phi;
    for (int k = 1; k < s; ++k) {
      phi += half.phase_increments(j, std::min(k, s - k) - 1);
      drive.phases(j, k) = phi;
    }
  }
  drive.symmetric_source = std::make_shared<SymmetricHalfDrive>(half);
  return drive;
}

std::vector<int> GateTarget::addressed() const {
  std::set<int> set;
  for (const auto& group : gate_groups) set.insert(group.begin(), group.end());
  return {set.begin(), set.end()};
}

void GateTarget::validate() const {
  if (n_ions < 1) throw validation_error("gate target needs n_ions >= 1");
  if (psi.rows() != n_ions || psi.cols() != n_ions)
    throw validation_error("psi matrix has the wrong shape");
  const auto addr = addressed();
  std::set<int> addr_set(addr.begin(), addr.end());
  for (int ion : addr)
    if (ion < 0 || ion >= n_ions)
      throw validation_error("gate references an ion outside the chain");
  for (int j = 0; j < n_ions; ++j) {
    if (psi(j, j) != 0.0) throw validation_error("psi diagonal must be zero");
    for (int k = 0; k < n_ions; ++k) {
      if (psi(j, k) != psi(k, j)) throw validation_error("psi must be symmetric");
      if (psi(j, k) != 0.0 && (!addr_set.count(j) || !addr_set.count(k)))
        throw validation_error("nonzero target phase on an un-addressed pair");
      if (std::abs(psi(j, k)) > pi + 1e-12)
        throw validation_error("target phases must lie in (-pi, pi]");
    }
  }
}

ConstraintReport validate(const DriveWaveform& drive, const SchemeConfig& scheme) {
  drive.validate_shape();
  const int s = drive.segment_count();
  ConstraintReport r;
  r.max_amplitude = drive.amplitudes.size() ? drive.amplitudes.maxCoeff() : 0.0;
  for (int j = 0; j < drive.n_ions(); ++j) {
    for (int k = 1; k < s; ++k) {
      r.max_amplitude_step = std::max(
          r.max_amplitude_step, std::abs(drive.amplitudes(j, k) - drive.amplitudes(j, k - 1)));
      r.max_phase_step = std::max(
          r.max_phase_step, std::abs(wrap_angle(drive.phases(j, k) - drive.phases(j, k - 1))));
    }
    r.start_amplitude = std::max(r.start_amplitude, drive.amplitudes(j, 0));
    r.end_amplitude = std::max(r.end_amplitude, drive.amplitudes(j, s - 1));
  }

  r.amplitude_ok = r.max_amplitude <= scheme.max_rabi;
  if (scheme.slew) {
    r.amplitude_step_ok = r.max_amplitude_step <= scheme.slew->max_amplitude_step;
    r.phase_step_ok = r.max_phase_step <= scheme.slew->max_phase_step;
    r.amplitude_step_violation =
        std::max(0.0, r.max_amplitude_step - scheme.slew->max_amplitude_step);
    r.phase_step_violation = std::max(0.0, r.max_phase_step - scheme.slew->max_phase_step);
    r.endpoint_ok = r.start_amplitude <= scheme.slew->max_amplitude_step &&
                    (!scheme.pin_endpoints ||
                     r.end_amplitude <= scheme.slew->max_amplitude_step);
  }

  if (scheme.robust) {
    bool witnessed = false;
    if (drive.symmetric_source) {
      const auto rebuilt = reflect_symmetric(*drive.symmetric_source);
      if (rebuilt.amplitudes.rows() == drive.amplitudes.rows() &&
          rebuilt.amplitudes.cols() == drive.amplitudes.cols()) {
        r.amplitude_symmetry_residual =
            (rebuilt.amplitudes - drive.amplitudes).cwiseAbs().maxCoeff();
        r.phase_symmetry_residual =
            (rebuilt.phases - drive.phases).cwiseAbs().maxCoeff();
        witnessed = true;
      }
    }
    if (!witnessed) {
      for (int j = 0; j < drive.n_ions(); ++j) {
        for (int k = 0; k < s; ++k)
          r.amplitude_symmetry_residual =
              std::max(r.amplitude_symmetry_residual,
                       std::abs(drive.amplitudes(j, k) - drive.amplitudes(j, s - 1 - k)));
        for (int k = 1; k < s; ++k) {
          const int m = s - k; // mirrored increment index
          const double inc = drive.phases(j, k) - drive.phases(j, k - 1);
          const double mirrored = drive.phases(j, m) - drive.phases(j, m - 1);
          r.phase_symmetry_residual =
              std::max(r.phase_symmetry_residual, std::abs(wrap_angle(inc - mirrored)));
        }
      }
    }
    r.symmetry_ok =
        r.amplitude_symmetry_residual <= 1e-12 * std::max(1.0, r.max_amplitude) &&
        r.phase_symmetry_residual <= 1e-12;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Parametrization
// ---------------------------------------------------------------------------

Parametrization::Parametrization(const SchemeConfig& scheme, std::vector<int> addressed,
                                 double duration)
    : scheme_(scheme), ions_(std::move(addressed)), duration_(duration) {
  if (!(duration_ > 0.0)) throw validation_error("drive duration must be positive");
  std::sort(ions_.begin(), ions_.end());
  scheme_.validate(ions_);
  if (ions_.empty()) throw validation_error("no addressed ions");

  if (scheme_.slew) {
    amp_chain_scale_ = 4.0 * scheme_.slew->max_amplitude_step / scheme_.max_rabi;
    start_amplitude_cap_ = std::min(scheme_.slew->max_amplitude_step, scheme_.max_rabi);
  }

  std::vector<std::vector<int>> groups = scheme_.shared_groups;
  if (groups.empty()) {
    for (int ion : ions_) groups.push_back({ion});
  }
  const int amp_vars = (scheme_.modulation == Modulation::pm) ? 0 : amp_profile_length();
  const int phase_vars = (scheme_.modulation == Modulation::am)
                             ? 0
                             : (scheme_.robust ? phase_increment_count() : scheme_.segments);
  int offset = 0;
  for (const auto& members : groups) {
    Group g;
    for (int ion : members) {
      const auto it = std::lower_bound(ions_.begin(), ions_.end(), ion);
      g.rows.push_back(static_cast<int>(it - ions_.begin()));
    }
    std::sort(g.rows.begin(), g.rows.end());
    g.amp_offset = offset;
    g.amp_count = amp_vars;
    offset += amp_vars;
    g.phase_offset = offset;
    g.phase_count = phase_vars;
    offset += phase_vars;
    groups_.push_back(std::move(g));
  }
  variable_count_ = offset;
}

int Parametrization::amp_profile_length() const {
  return scheme_.robust ? (scheme_.segments + 1) / 2 : scheme_.segments;
}

int Parametrization::phase_increment_count() const { return scheme_.segments / 2; }

void Parametrization::amplitude_profile(const Eigen::VectorXd& vars,
                                        Eigen::VectorXd& profile,
                                        Eigen::VectorXd* chain_positions) const {
  const int len = amp_profile_length();
  profile.resize(len);
  if (scheme_.modulation == Modulation::pm) {
    profile.setConstant(scheme_.max_rabi);
    return;
  }
  if (!scheme_.slew) {
    for (int i = 0; i < len; ++i) profile[i] = scheme_.max_rabi * sigmoid(vars[i]);
    return;
  }
  // bounded-increment chain in squash space, seeded at zero amplitude
  Eigen::VectorXd p(len);
  const double ratio = start_amplitude_cap_ / scheme_.max_rabi;
  p[0] = scaled_logit_of_sigmoid(ratio, vars[0]);
  for (int i = 1; i < len; ++i) p[i] = p[i - 1] + amp_chain_scale_ * std::tanh(vars[i]);
  for (int i = 0; i < len; ++i) profile[i] = scheme_.max_rabi * sigmoid(p[i]);
  if (chain_positions) *chain_positions = p;
}

Eigen::VectorXd Parametrization::phase_profile(const Eigen::VectorXd& vars) const {
  const int s = scheme_.segments;
  Eigen::VectorXd phi(s);
  if (scheme_.modulation == Modulation::am) {
    phi.setZero();
    return phi;
  }
  if (!scheme_.slew) {
    phi = vars;
    return phi;
  }
  phi[0] = vars[0];
  for (int k = 1; k < s; ++k)
    phi[k] = phi[k - 1] + scheme_.slew->max_phase_step * std::tanh(vars[k]);
  return phi;
}

DriveWaveform Parametrization::drive(const Eigen::VectorXd& theta) const {
  if (theta.size() != variable_count_)
    throw validation_error("variable vector has the wrong length");
  const int s = scheme_.segments;
  const int n = static_cast<int>(ions_.size());

  if (scheme_.robust) {
    // build the half-specification and let the reflection produce the full
    // waveform, so the validator's re-derivation matches bitwise
    SymmetricHalfDrive half;
    half.duration = duration_;
    half.segments = s;
    half.ions = ions_;
    half.amplitudes.resize(n, (s + 1) / 2);
    half.phase_increments.resize(n, s / 2);
    half.initial_phases = Eigen::VectorXd::Zero(n);
    for (const auto& g : groups_) {
      Eigen::VectorXd profile;
      amplitude_profile(theta.segment(g.amp_offset, g.amp_count), profile, nullptr);
      Eigen::VectorXd increments = Eigen::VectorXd::Zero(s / 2);
      if (scheme_.modulation != Modulation::am) {
        const auto vars = theta.segment(g.phase_offset, g.phase_count);
        for (int m = 0; m < s / 2; ++m)
          increments[m] =
              scheme_.slew ? scheme_.slew->max_phase_step * std::tanh(vars[m]) : vars[m];
      }
      for (int row : g.rows) {
        half.amplitudes.row(row) = profile.transpose();
        half.phase_increments.row(row) = increments.transpose();
      }
    }
    return reflect_symmetric(half);
  }

  DriveWaveform d;
  d.duration = duration_;
  d.ions = ions_;
  d.boundaries = Eigen::VectorXd::LinSpaced(s + 1, 0.0, duration_);
  d.boundaries[0] = 0.0;
  d.boundaries[s] = duration_;
  d.amplitudes.resize(n, s);
  d.phases.resize(n, s);
  for (const auto& g : groups_) {
    Eigen::VectorXd profile;
    amplitude_profile(theta.segment(g.amp_offset, g.amp_count), profile, nullptr);
    const Eigen::VectorXd phi = phase_profile(theta.segment(g.phase_offset, g.phase_count));
    for (int row : g.rows) {
      d.amplitudes.row(row) = profile.transpose();
      d.phases.row(row) = phi.transpose();
    }
  }
  return d;
}

Eigen::VectorXd Parametrization::extract(const DriveWaveform& d) const {
  d.validate_shape();
  if (d.ions != ions_ || d.segment_count() != scheme_.segments)
    throw validation_error("drive does not match this parametrization");
  Eigen::VectorXd theta(variable_count_);
  const int s = scheme_.segments;
  for (const auto& g : groups_) {
    const int row = g.rows.front();
    for (int other : g.rows)
      if ((d.amplitudes.row(other) - d.amplitudes.row(row)).cwiseAbs().maxCoeff() != 0.0 ||
          (d.phases.row(other) - d.phases.row(row)).cwiseAbs().maxCoeff() != 0.0)
        throw validation_error("shared-group ions carry different drives");

    if (g.amp_count > 0) {
      Eigen::VectorXd vars(g.amp_count);
      if (!scheme_.slew) {
        for (int i = 0; i < g.amp_count; ++i)
          vars[i] = logit(d.amplitudes(row, i) / scheme_.max_rabi);
      } else {
        Eigen::VectorXd p(g.amp_count);
        for (int i = 0; i < g.amp_count; ++i)
          p[i] = logit(d.amplitudes(row, i) / scheme_.max_rabi);
        vars[0] = logit(d.amplitudes(row, 0) / start_amplitude_cap_);
        for (int i = 1; i < g.amp_count; ++i) {
          const double step = (p[i] - p[i - 1]) / amp_chain_scale_;
          if (!(std::abs(step) < 1.0))
            throw validation_error("amplitude step outside the slew range");
          vars[i] = std::atanh(step);
        }
      }
      theta.segment(g.amp_offset, g.amp_count) = vars;
    }
    if (g.phase_count > 0) {
      Eigen::VectorXd vars(g.phase_count);
      if (!scheme_.robust) {
        if (!scheme_.slew) {
          vars = d.phases.row(row).transpose();
        } else {
          vars[0] = d.phases(row, 0);
          for (int k = 1; k < s; ++k) {
            const double step =
                (d.phases(row, k) - d.phases(row, k - 1)) / scheme_.slew->max_phase_step;
            if (!(std::abs(step) < 1.0))
              throw validation_error("phase step outside the slew range");
            vars[k] = std::atanh(step);
          }
        }
      } else {
        for (int k = 1; k <= s / 2; ++k) {
          const double inc = d.phases(row, k) - d.phases(row, k - 1);
          vars[k - 1] = scheme_.slew
                            ? std::atanh(inc / scheme_.slew->max_phase_step)
                            : inc;
          if (scheme_.slew && !std::isfinite(vars[k - 1]))
            throw validation_error("phase step outside the slew range");
        }
      }
      theta.segment(g.phase_offset, g.phase_count) = vars;
    }
  }
  return theta;
}

Eigen::VectorXd Parametrization::pullback(const Eigen::VectorXd& theta,
                                          const Eigen::MatrixXd& cost_d_amplitude,
                                          const Eigen::MatrixXd& cost_d_phase) const {
  if (theta.size() != variable_count_)
    throw validation_error("variable vector has the wrong length");
  const int s = scheme_.segments;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(variable_count_);

  for (const auto& g : groups_) {
    Eigen::VectorXd d_amp = Eigen::VectorXd::Zero(s);
    Eigen::VectorXd d_phi = Eigen::VectorXd::Zero(s);
    for (int row : g.rows) {
      d_amp += cost_d_amplitude.row(row).transpose();
      d_phi += cost_d_phase.row(row).transpose();
    }

    if (g.amp_count > 0) {
      const int len = amp_profile_length();
      Eigen::VectorXd d_profile = Eigen::VectorXd::Zero(len);
      if (scheme_.robust) {
        for (int k = 0; k < s; ++k) d_profile[std::min(k, s - 1 - k)] += d_amp[k];
      } else {
        d_profile = d_amp;
      }
      const auto vars = theta.segment(g.amp_offset, g.amp_count);
      if (!scheme_.slew) {
        for (int i = 0; i < len; ++i)
          grad[g.amp_offset + i] =
              d_profile[i] * scheme_.max_rabi * sigmoid_derivative(vars[i]);
      } else {
        Eigen::VectorXd profile, p;
        amplitude_profile(vars, profile, &p);
        Eigen::VectorXd d_p(len);
        for (int i = 0; i < len; ++i)
          d_p[i] = d_profile[i] * scheme_.max_rabi * sigmoid_derivative(p[i]);
        // suffix sums: every later position depends on each increment
        for (int i = len - 2; i >= 0; --i) d_p[i] += d_p[i + 1];
        const double ratio = start_amplitude_cap_ / scheme_.max_rabi;
        grad[g.amp_offset] = d_p[0] * scaled_logit_of_sigmoid_slope(ratio, vars[0]);
        for (int i = 1; i < len; ++i) {
          const double t = std::tanh(vars[i]);
          grad[g.amp_offset + i] = d_p[i] * amp_chain_scale_ * (1.0 - t * t);
        }
      }
    }

    if (g.phase_count > 0) {
      const auto vars = theta.segment(g.phase_offset, g.phase_count);
      if (!scheme_.robust && !scheme_.slew) {
        grad.segment(g.phase_offset, g.phase_count) = d_phi;
      } else if (!scheme_.robust) {
        Eigen::VectorXd suffix = d_phi;
        for (int k = s - 2; k >= 0; --k) suffix[k] += suffix[k + 1];
        grad[g.phase_offset] = suffix[0];
        for (int k = 1; k < s; ++k) {
          const double t = std::tanh(vars[k]);
          grad[g.phase_offset + k] =
              suffix[k] * scheme_.slew->max_phase_step * (1.0 - t * t);
        }
      } else {
        Eigen::VectorXd suffix = d_phi;
        for (int k = s - 2; k >= 0; --k) suffix[k] += suffix[k + 1];
        Eigen::VectorXd d_free = Eigen::VectorXd::Zero(g.phase_count);
        for (int k = 1; k < s; ++k) d_free[std::min(k, s - k) - 1] += suffix[k];
        for (int m = 0; m < g.phase_count; ++m) {
          if (scheme_.slew) {
            const double t = std::tanh(vars[m]);
            grad[g.phase_offset + m] =
                d_free[m] * scheme_.slew->max_phase_step * (1.0 - t * t);
          } else {
            grad[g.phase_offset + m] = d_free[m];
          }
        }
      }
    }
  }
  return grad;
}

Eigen::VectorXd Parametrization::random_guess(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd theta(variable_count_);
  for (const auto& g : groups_) {
    for (int i = 0; i < g.amp_count; ++i) {
      if (scheme_.slew && i > 0) {
        // bounded increment, drawn well inside the tanh range
        theta[g.amp_offset + i] = std::atanh(0.6 * (2.0 * unit(rng) - 1.0));
      } else {
        theta[g.amp_offset + i] = logit(0.1 + 0.8 * unit(rng));
      }
    }
    // Slew-bounded phase increments are seeded near a common per-group ramp
    // (a carrier retune) plus noise; with independent draws the start has no
    // phase accumulation to speak of and descent collapses the amplitudes.
    const double ramp = 0.8 * (2.0 * unit(rng) - 1.0);
    for (int i = 0; i < g.phase_count; ++i) {
      const bool bounded_increment = scheme_.slew && (scheme_.robust || i > 0);
      if (bounded_increment) {
        const double step =
            std::clamp(ramp + 0.15 * (2.0 * unit(rng) - 1.0), -0.95, 0.95);
        theta[g.phase_offset + i] = std::atanh(step);
      } else {
        // uniform in (-pi, pi]
        theta[g.phase_offset + i] = -pi + two_pi * (1.0 - unit(rng));
      }
    }
  }
  return theta;
}

} // namespace ionpulse
