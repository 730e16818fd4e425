#pragma once

// Test-only quadrature oracle: adaptive panel Gauss-Legendre integration of
// the raw drive/carrier integrands. Deliberately independent of the
// closed-form segment primitives in the library.

#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ionpulse/control.hpp"

namespace oracle {

using Complex = std::complex<double>;

namespace detail {

// 20-point Gauss-Legendre nodes (positive half) and weights on [-1, 1]
inline constexpr double gl_nodes[10] = {
    0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
    0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
    0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
    0.9931285991850949};
inline constexpr double gl_weights[10] = {
    0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
    0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
    0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
    0.0176140071391521};

template <typename F>
Complex gauss20(const F& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  Complex sum{0.0, 0.0};
  for (int i = 0; i < 10; ++i) {
    const double dx = half * gl_nodes[i];
    sum += gl_weights[i] * (f(mid + dx) + f(mid - dx));
  }
  return half * sum;
}

template <typename F>
Complex adaptive(const F& f, double a, double b, double tol, int depth) {
  const Complex whole = gauss20(f, a, b);
  const double mid = 0.5 * (a + b);
  const Complex split = gauss20(f, a, mid) + gauss20(f, mid, b);
  // the relative floor stops refinement once the panel difference is rounding
  // noise, whatever absolute tolerance was requested
  const double floor = 1e-15 * (std::abs(whole) + std::abs(split));
  if (std::abs(whole - split) <= std::max(tol, floor) || depth >= 14) return split;
  return adaptive(f, a, mid, 0.5 * tol, depth + 1) +
         adaptive(f, mid, b, 0.5 * tol, depth + 1);
}

} // namespace detail

template <typename F>
Complex integrate(const F& f, double a, double b, double tol = 1e-13) {
  if (!(b > a)) return {0.0, 0.0};
  return detail::adaptive(f, a, b, tol, 0);
}

// gamma_j(t)/2 for a piecewise-constant drive; 0 outside [0, duration]
inline Complex half_control(const ionpulse::DriveWaveform& drive, int row, double t) {
  if (t < drive.boundaries[0] || t > drive.duration) return {0.0, 0.0};
  int k = 0;
  while (k + 1 < drive.segment_count() && t >= drive.boundaries[k + 1]) ++k;
  return 0.5 * std::polar(drive.amplitudes(row, k), drive.phases(row, k));
}

// single-segment carrier integral (1/2) int_{A_k} exp(i delta t) dt
inline Complex displacement_entry(double delta, double a, double b, double tol = 1e-13) {
  return 0.5 * integrate([&](double t) { return std::polar(1.0, delta * t); }, a, b, tol);
}

// int_{A_k} dt1 exp(i delta t1) int_{A_l cap [0, t1]} dt2 exp(-i delta t2)
inline Complex ordered_pair_entry(double delta, const Eigen::VectorXd& boundaries,
                                  int k, int l, double tol = 1e-13) {
  const auto inner = [&](double t1) -> Complex {
    const double lo = boundaries[l];
    const double hi = std::min(boundaries[l + 1], t1);
    if (!(hi > lo)) return {0.0, 0.0};
    return integrate([&](double t2) { return std::polar(1.0, -delta * t2); }, lo, hi,
                     0.1 * tol);
  };
  return integrate([&](double t1) { return std::polar(1.0, delta * t1) * inner(t1); },
                   boundaries[k], boundaries[k + 1], tol);
}

// int_0^T dt int_{A_k cap [0, t]} dt1 exp(i delta t1); outer panels split at
// the segment edges where the integrand has kinks
inline Complex com_entry(double delta, const Eigen::VectorXd& boundaries, int k,
                         double total, double tol = 1e-13) {
  const auto inner = [&](double t) -> Complex {
    const double lo = boundaries[k];
    const double hi = std::min(boundaries[k + 1], t);
    if (!(hi > lo)) return {0.0, 0.0};
    return integrate([&](double t1) { return std::polar(1.0, delta * t1); }, lo, hi,
                     0.1 * tol);
  };
  return integrate(inner, boundaries[k], boundaries[k + 1], tol) +
         integrate(inner, boundaries[k + 1], total, tol);
}

// alpha_j^p(t) by direct quadrature, split at segment boundaries
inline Complex alpha(const ionpulse::DriveWaveform& drive, int row, double delta,
                     double t, double tol = 1e-13) {
  Complex total{0.0, 0.0};
  for (int k = 0; k < drive.segment_count(); ++k) {
    const double lo = drive.boundaries[k];
    const double hi = std::min(drive.boundaries[k + 1], t);
    if (!(hi > lo)) break;
    total += integrate(
        [&](double s) { return half_control(drive, row, s) * std::polar(1.0, delta * s); },
        lo, hi, tol);
  }
  return total;
}

// int_0^tau t (gamma_j(t)/2) exp(i delta t) dt
inline Complex t_weighted(const ionpulse::DriveWaveform& drive, int row, double delta,
                          double tol = 1e-13) {
  Complex total{0.0, 0.0};
  for (int k = 0; k < drive.segment_count(); ++k) {
    total += integrate(
        [&](double s) {
          return s * half_control(drive, row, s) * std::polar(1.0, delta * s);
        },
        drive.boundaries[k], drive.boundaries[k + 1], tol);
  }
  return total;
}

// int_0^tau alpha_j^p(t) dt with the trajectory itself evaluated by quadrature
inline Complex com_of_trajectory(const ionpulse::DriveWaveform& drive, int row,
                                 double delta, double tol = 1e-12) {
  Complex total{0.0, 0.0};
  for (int k = 0; k < drive.segment_count(); ++k) {
    total += integrate([&](double t) { return alpha(drive, row, delta, t, 0.1 * tol); },
                       drive.boundaries[k], drive.boundaries[k + 1], tol);
  }
  return total;
}

// phi_mn(t) for one mode with coupling eta_m eta_n, by nested quadrature
inline double pair_phase(const ionpulse::DriveWaveform& drive, int row_m, int row_n,
                         double eta_m, double eta_n, double delta, double t,
                         double tol = 1e-12) {
  Complex total{0.0, 0.0};
  for (int k = 0; k < drive.segment_count(); ++k) {
    const double lo = drive.boundaries[k];
    const double hi = std::min(drive.boundaries[k + 1], t);
    if (!(hi > lo)) break;
    total += integrate(
        [&](double t1) {
          const Complex beta_m =
              half_control(drive, row_m, t1) * std::polar(1.0, delta * t1);
          Complex inner{0.0, 0.0};
          for (int l = 0; l < drive.segment_count(); ++l) {
            const double ilo = drive.boundaries[l];
            const double ihi = std::min(drive.boundaries[l + 1], t1);
            if (!(ihi > ilo)) break;
            inner += integrate(
                [&](double t2) {
                  return std::conj(half_control(drive, row_n, t2)) *
                         std::polar(1.0, -delta * t2);
                },
                ilo, ihi, 0.1 * tol);
          }
          return beta_m * inner;
        },
        lo, hi, tol);
  }
  return eta_m * eta_n * std::imag(total);
}

} // namespace oracle
