#include "ionpulse/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ionpulse/units.hpp"

namespace ionpulse {

namespace segment_integrals {

namespace {

// The closed forms below subtract the leading Taylor terms of exp(i x), so
// their relative error grows like eps / x^2 as x -> 0. Below this threshold
// the series (summed to machine precision) is the accurate branch.
constexpr double series_threshold = 0.5;
constexpr Complex i_unit{0.0, 1.0};

// sum_{n >= 0} z^n / (n + start)! starting from the given factorial offset
Complex tail_series(Complex z, int start) {
  double factorial = 1.0;
  for (int n = 2; n <= start; ++n) factorial *= n;
  Complex term{1.0 / factorial, 0.0};
  Complex sum = term;
  for (int n = 1; n < 40; ++n) {
    term *= z / static_cast<double>(n + start);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

} // namespace

Complex exp_moment0(double d, double h) {
  const double x = d * h;
  if (std::abs(x) < series_threshold) {
    // h * sum z^n / (n+1)!
    return h * tail_series(i_unit * x, 1);
  }
  return (std::polar(1.0, x) - 1.0) / (i_unit * d);
}

Complex exp_moment1(double d, double h) {
  const double x = d * h;
  if (std::abs(x) < series_threshold) {
    // h^2 * sum z^n / (n! (n+2))
    const Complex z = i_unit * x;
    Complex term{0.5, 0.0};
    Complex sum = term;
    double inv_factorial = 1.0;
    Complex zn{1.0, 0.0};
    for (int n = 1; n < 40; ++n) {
      inv_factorial /= n;
      zn *= z;
      term = zn * (inv_factorial / (n + 2));
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return h * h * sum;
  }
  const Complex eix = std::polar(1.0, x);
  return (h * eix) / (i_unit * d) + (eix - 1.0) / (d * d);
}

Complex triangle(double d, double h) {
  const double x = d * h;
  if (std::abs(x) < series_threshold) {
    // h^2 * sum z^n / (n+2)!
    return h * h * tail_series(i_unit * x, 2);
  }
  const Complex eix = std::polar(1.0, x);
  return -(eix - 1.0 - i_unit * x) / (d * d);
}

} // namespace segment_integrals

namespace {

void validate_boundaries(const Eigen::VectorXd& boundaries, double duration) {
  if (!(duration > 0.0)) throw validation_error("kernel duration must be positive");
  if (boundaries.size() < 2) throw validation_error("grid needs at least one segment");
  if (std::abs(boundaries[0]) > 1e-15 * duration)
    throw validation_error("grid must start at t = 0");
  if (std::abs(boundaries[boundaries.size() - 1] - duration) > 1e-12 * duration)
    throw validation_error("grid must end at the stated duration");
  for (int k = 0; k + 1 < boundaries.size(); ++k)
    if (!(boundaries[k] < boundaries[k + 1]))
      throw validation_error("grid boundaries must be strictly increasing");
}

void validate_addressed(const std::vector<int>& ions, int n_ions) {
  if (ions.empty()) throw validation_error("no addressed ions");
  if (!std::is_sorted(ions.begin(), ions.end()) ||
      std::adjacent_find(ions.begin(), ions.end()) != ions.end())
    throw validation_error("addressed ions must be sorted and unique");
  if (ions.front() < 0 || ions.back() >= n_ions)
    throw validation_error("addressed ion index outside the chain");
}

} // namespace

KernelSet KernelSet::build(const ModeData& modes, double duration,
                           const Eigen::VectorXd& boundaries_s,
                           const std::vector<int>& addressed_ions) {
  validate_boundaries(boundaries_s, duration);
  validate_addressed(addressed_ions, modes.n_ions());
  for (int p = 0; p < modes.n_modes(); ++p)
    if (!std::isfinite(modes.detunings[p]))
      throw validation_error("mode detunings must be finite");

  KernelSet ks;
  ks.modes_ = modes;
  ks.ions_ = addressed_ions;
  ks.duration_ = duration;
  ks.boundaries_ = boundaries_s;
  ks.scaled_grid_ = boundaries_s / duration;
  ks.scaled_grid_[0] = 0.0;
  ks.scaled_grid_[boundaries_s.size() - 1] = 1.0;

  const int n_modes = modes.n_modes();
  const int n_addr = static_cast<int>(addressed_ions.size());
  const int s = static_cast<int>(ks.scaled_grid_.size()) - 1;

  ks.eta_.resize(n_addr, n_modes);
  for (int j = 0; j < n_addr; ++j)
    ks.eta_.row(j) = modes.lamb_dicke.row(addressed_ions[j]);

  ks.m_.resize(n_modes, s);
  ks.r_.resize(n_modes, s);
  ks.w_.resize(n_modes, s);
  const int n_pairs = n_addr * (n_addr - 1) / 2;
  ks.p_.assign(n_pairs, Eigen::MatrixXcd::Zero(s, s));

  Eigen::MatrixXcd mode_block(s, s);
  for (int p = 0; p < n_modes; ++p) {
    const double d = modes.detunings[p] * duration;
    Eigen::VectorXcd full(s); // int_{A_k} e^{i d s} ds in scaled time
    Eigen::VectorXcd tri(s);
    for (int k = 0; k < s; ++k) {
      const double a = ks.scaled_grid_[k];
      const double h = ks.scaled_grid_[k + 1] - a;
      const Complex phase = std::polar(1.0, d * a);
      const Complex e0 = segment_integrals::exp_moment0(d, h);
      full[k] = phase * e0;
      tri[k] = segment_integrals::triangle(d, h);
      ks.m_(p, k) = 0.5 * full[k];
      ks.r_(p, k) = phase * tri[k] + (1.0 - ks.scaled_grid_[k + 1]) * full[k];
      ks.w_(p, k) = phase * (a * e0 + segment_integrals::exp_moment1(d, h));
    }
    if (n_pairs > 0) {
      mode_block.setZero();
      for (int k = 0; k < s; ++k) {
        mode_block(k, k) = tri[k];
        for (int l = 0; l < k; ++l) mode_block(k, l) = full[k] * std::conj(full[l]);
      }
      int idx = 0;
      for (int a = 0; a < n_addr; ++a) {
        for (int b = a + 1; b < n_addr; ++b, ++idx) {
          const double weight = 0.25 * ks.eta_(a, p) * ks.eta_(b, p);
          if (weight != 0.0) ks.p_[idx] += weight * mode_block;
        }
      }
    }
  }
  return ks;
}

KernelSet KernelSet::build_uniform(const ModeData& modes, double duration,
                                   int segments, const std::vector<int>& addressed_ions) {
  if (segments < 1) throw validation_error("segment count must be >= 1");
  Eigen::VectorXd boundaries = Eigen::VectorXd::LinSpaced(segments + 1, 0.0, duration);
  boundaries[0] = 0.0;
  boundaries[segments] = duration;
  return build(modes, duration, boundaries, addressed_ions);
}

KernelSet KernelSet::with_detuning_offset(double offset) const {
  return with_detuning_offsets(Eigen::VectorXd::Constant(n_modes(), offset));
}

KernelSet KernelSet::with_detuning_offsets(const Eigen::VectorXd& offsets) const {
  if (offsets.size() != n_modes())
    throw validation_error("detuning offset vector has the wrong length");
  ModeData shifted = modes_;
  shifted.detunings += offsets;
  return build(shifted, duration_, boundaries_, ions_);
}

KernelSet KernelSet::with_time_stretch(double factor) const {
  if (!(factor > 0.0)) throw validation_error("time stretch factor must be positive");
  return build(modes_, duration_ * factor, boundaries_ * factor, ions_);
}

Eigen::MatrixXcd KernelSet::shifted_displacement_kernel(double offset) const {
  const int s = n_segments();
  Eigen::MatrixXcd m(n_modes(), s);
  for (int p = 0; p < n_modes(); ++p) {
    const double d = (modes_.detunings[p] + offset) * duration_;
    for (int k = 0; k < s; ++k) {
      const double a = scaled_grid_[k];
      const double h = scaled_grid_[k + 1] - a;
      m(p, k) = 0.5 * std::polar(1.0, d * a) * segment_integrals::exp_moment0(d, h);
    }
  }
  return m;
}

const Eigen::MatrixXcd& KernelSet::pair_phase_kernel(int a, int b) const {
  return p_[pair_offset(a, b)];
}

int KernelSet::pair_offset(int a, int b) const {
  const int n = n_addressed();
  if (a > b) std::swap(a, b);
  if (a < 0 || b >= n || a == b) throw validation_error("bad addressed pair");
  return a * (2 * n - a - 1) / 2 + (b - a - 1);
}

void KernelSet::check_grid(const DriveWaveform& drive) const {
  if (drive.ions != ions_)
    throw validation_error("drive addresses different ions than the kernels");
  if (drive.segment_count() != n_segments())
    throw validation_error("drive segment count does not match the kernel grid");
  if (std::abs(drive.duration - duration_) > 1e-12 * duration_)
    throw validation_error("drive duration does not match the kernel grid");
  if ((drive.boundaries - boundaries_).cwiseAbs().maxCoeff() > 1e-9 * duration_)
    throw validation_error("drive boundaries do not match the kernel grid");
}

Eigen::MatrixXcd KernelSet::scaled_controls(const DriveWaveform& drive) const {
  check_grid(drive);
  Eigen::MatrixXcd u(n_addressed(), n_segments());
  for (int j = 0; j < n_addressed(); ++j)
    for (int k = 0; k < n_segments(); ++k)
      u(j, k) = std::polar(duration_ * drive.amplitudes(j, k), drive.phases(j, k));
  return u;
}

Eigen::MatrixXcd KernelSet::displacements(const DriveWaveform& drive) const {
  return scaled_controls(drive) * m_.transpose();
}

Eigen::MatrixXd KernelSet::entangling_phases(const DriveWaveform& drive) const {
  const Eigen::MatrixXcd u = scaled_controls(drive);
  const int n = n_addressed();
  Eigen::MatrixXd phases = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const Eigen::MatrixXcd& p = p_[pair_offset(a, b)];
      const Complex t1 = u.row(a) * (p * u.row(b).transpose().conjugate());
      const Complex t2 = u.row(b) * (p * u.row(a).transpose().conjugate());
      phases(a, b) = phases(b, a) = std::imag(t1 + t2);
    }
  }
  return phases;
}

Eigen::MatrixXcd KernelSet::com_residuals(const DriveWaveform& drive) const {
  return (0.5 * duration_) * (scaled_controls(drive) * r_.transpose());
}

Eigen::MatrixXcd KernelSet::t_weighted_integrals(const DriveWaveform& drive) const {
  return (0.5 * duration_) * (scaled_controls(drive) * w_.transpose());
}

// ---------------------------------------------------------------------------
// Piecewise-exact time series
// ---------------------------------------------------------------------------

namespace {

struct SeriesMarcher {
  const DriveWaveform& drive;
  const ModeData& modes;
  bool with_phases;

  int n = 0, m = 0, s = 0;
  Eigen::MatrixXd eta;        // addressed x modes
  Eigen::MatrixXcd controls;  // gamma/2, addressed x segments
  Eigen::MatrixXcd acc;       // running alpha-integrals, addressed x modes
  Eigen::MatrixXd phi;        // running summed pair phases
  int segment = 0;

  SeriesMarcher(const DriveWaveform& d, const ModeData& md, bool phases)
      : drive(d), modes(md), with_phases(phases) {
    drive.validate_shape();
    n = drive.n_ions();
    m = modes.n_modes();
    s = drive.segment_count();
    for (int ion : drive.ions)
      if (ion < 0 || ion >= modes.n_ions())
        throw validation_error("drive addresses an ion outside the mode data");
    eta.resize(n, m);
    for (int j = 0; j < n; ++j) eta.row(j) = modes.lamb_dicke.row(drive.ions[j]);
    controls.resize(n, s);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < s; ++k)
        controls(j, k) = 0.5 * std::polar(drive.amplitudes(j, k), drive.phases(j, k));
    acc = Eigen::MatrixXcd::Zero(n, m);
    phi = Eigen::MatrixXd::Zero(n, n);
  }

  // contribution of [start of current segment, start + h) given accumulators
  void span(double h, Eigen::MatrixXcd& alpha_out, Eigen::MatrixXd* phi_out) const {
    const double a = drive.boundaries[segment];
    alpha_out = acc;
    if (phi_out) *phi_out = phi;
    if (h <= 0.0) return;
    for (int p = 0; p < m; ++p) {
      const double d = modes.detunings[p];
      const Complex full = std::polar(1.0, d * a) * segment_integrals::exp_moment0(d, h);
      const Complex tri = segment_integrals::triangle(d, h);
      for (int j = 0; j < n; ++j) alpha_out(j, p) += controls(j, segment) * full;
      if (phi_out) {
        for (int ja = 0; ja < n; ++ja) {
          const Complex ga = controls(ja, segment);
          for (int jb = ja + 1; jb < n; ++jb) {
            const Complex gb = controls(jb, segment);
            const Complex cross = ga * std::conj(acc(jb, p)) + gb * std::conj(acc(ja, p));
            const Complex ordered = (ga * std::conj(gb) + gb * std::conj(ga)) * tri;
            const double inc = eta(ja, p) * eta(jb, p) * std::imag(cross * full + ordered);
            (*phi_out)(ja, jb) += inc;
            (*phi_out)(jb, ja) += inc;
          }
        }
      }
    }
  }

  void commit_segment() {
    const double a = drive.boundaries[segment];
    const double h = drive.boundaries[segment + 1] - a;
    for (int p = 0; p < m; ++p) {
      const double d = modes.detunings[p];
      const Complex full = std::polar(1.0, d * a) * segment_integrals::exp_moment0(d, h);
      const Complex tri = segment_integrals::triangle(d, h);
      if (with_phases) {
        for (int ja = 0; ja < n; ++ja) {
          const Complex ga = controls(ja, segment);
          for (int jb = ja + 1; jb < n; ++jb) {
            const Complex gb = controls(jb, segment);
            const Complex cross = ga * std::conj(acc(jb, p)) + gb * std::conj(acc(ja, p));
            const Complex ordered = (ga * std::conj(gb) + gb * std::conj(ga)) * tri;
            const double inc = eta(ja, p) * eta(jb, p) * std::imag(cross * full + ordered);
            phi(ja, jb) += inc;
            phi(jb, ja) += inc;
          }
        }
      }
      for (int j = 0; j < n; ++j) acc(j, p) += controls(j, segment) * full;
    }
    ++segment;
  }
};

std::vector<int> sorted_time_order(const std::vector<double>& times, double duration) {
  for (double t : times)
    if (!(t >= -1e-15 * duration) || !(t <= duration * (1.0 + 1e-12)))
      throw validation_error("sample time outside [0, duration]");
  std::vector<int> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return times[a] < times[b]; });
  return order;
}

} // namespace

TrajectorySeries trajectory_series(const DriveWaveform& drive, const ModeData& modes,
                                   const std::vector<double>& times) {
  SeriesMarcher marcher(drive, modes, false);
  const auto order = sorted_time_order(times, drive.duration);
  TrajectorySeries series;
  series.times = times;
  series.alpha.assign(times.size(), Eigen::MatrixXcd());
  for (int idx : order) {
    const double t = std::min(times[idx], drive.duration);
    while (marcher.segment < marcher.s &&
           drive.boundaries[marcher.segment + 1] <= t)
      marcher.commit_segment();
    const double h =
        (marcher.segment < marcher.s) ? t - drive.boundaries[marcher.segment] : 0.0;
    marcher.span(h, series.alpha[idx], nullptr);
  }
  return series;
}

PhaseSeries phase_series(const DriveWaveform& drive, const ModeData& modes,
                         const std::vector<double>& times) {
  SeriesMarcher marcher(drive, modes, true);
  const auto order = sorted_time_order(times, drive.duration);
  PhaseSeries series;
  series.times = times;
  series.phases.assign(times.size(), Eigen::MatrixXd());
  Eigen::MatrixXcd alpha_scratch;
  for (int idx : order) {
    const double t = std::min(times[idx], drive.duration);
    while (marcher.segment < marcher.s &&
           drive.boundaries[marcher.segment + 1] <= t)
      marcher.commit_segment();
    const double h =
        (marcher.segment < marcher.s) ? t - drive.boundaries[marcher.segment] : 0.0;
    marcher.span(h, alpha_scratch, &series.phases[idx]);
  }
  return series;
}

} // namespace ionpulse
