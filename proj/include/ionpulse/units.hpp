#pragma once

#include <cmath>
#include <numbers>

namespace ionpulse {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace constants {
// CODATA 2018
inline constexpr double hbar = 1.054571817e-34;              // J s
inline constexpr double atomic_mass_unit = 1.66053906660e-27; // kg
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12; // F/m
} // namespace constants

namespace units {
inline double mhz_to_rads(double f) { return two_pi * 1e6 * f; }
inline double khz_to_rads(double f) { return two_pi * 1e3 * f; }
inline double hz_to_rads(double f) { return two_pi * f; }
inline double rads_to_mhz(double w) { return w / (two_pi * 1e6); }
inline double rads_to_khz(double w) { return w / (two_pi * 1e3); }
inline double us_to_s(double t) { return 1e-6 * t; }
inline double amu_to_kg(double m) { return m * constants::atomic_mass_unit; }
} // namespace units

// wrap an angle to (-pi, pi]
inline double wrap_angle(double x) {
  double r = std::remainder(x, two_pi);
  if (r <= -pi) r += two_pi;
  return r;
}

} // namespace ionpulse
