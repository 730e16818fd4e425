#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <random>

#include "helpers.hpp"
#include "ionpulse/kernels.hpp"
#include "ionpulse/units.hpp"
#include "oracle.hpp"

using namespace ionpulse;

namespace {

DriveWaveform constant_drive(const std::vector<int>& ions, int segments, double duration,
                             double omega, double phase = 0.0) {
  DriveWaveform drive;
  drive.duration = duration;
  drive.ions = ions;
  drive.boundaries = Eigen::VectorXd::LinSpaced(segments + 1, 0.0, duration);
  drive.boundaries[0] = 0.0;
  drive.boundaries[segments] = duration;
  drive.amplitudes = Eigen::MatrixXd::Constant(ions.size(), segments, omega);
  drive.phases = Eigen::MatrixXd::Constant(ions.size(), segments, phase);
  return drive;
}

} // namespace

TEST_CASE("quadrature oracle reproduces hand-integrable cases") {
  const Complex i{0.0, 1.0};
  // int_0^1 exp(i pi t) dt = 2i / pi
  const Complex a =
      oracle::integrate([&](double t) { return std::exp(i * pi * t); }, 0.0, 1.0);
  CHECK(std::abs(a - 2.0 * i / pi) < 1e-13);
  // int_0^2 t^3 dt = 4
  const Complex b = oracle::integrate([](double t) { return Complex{t * t * t, 0.0}; },
                                      0.0, 2.0);
  CHECK(std::abs(b - 4.0) < 1e-12);
  // oscillatory: int_0^1 exp(50 i t) dt
  const Complex c =
      oracle::integrate([&](double t) { return std::exp(i * 50.0 * t); }, 0.0, 1.0);
  CHECK(std::abs(c - (std::exp(i * 50.0) - 1.0) / (i * 50.0)) < 1e-13);
}

TEST_CASE("segment primitives handle the resonant limit") {
  SUBCASE("zero detuning gives half the segment length") {
    CHECK(segment_integrals::exp_moment0(0.0, 0.5) == Complex{0.5, 0.0});
    const double dt = 2.5e-6;
    ModeData modes;
    modes.frequencies = Eigen::VectorXd::Constant(1, 1.0);
    modes.eigenvectors = Eigen::MatrixXd::Ones(1, 1);
    modes.lamb_dicke = Eigen::MatrixXd::Constant(1, 1, 0.1);
    modes.detunings = Eigen::VectorXd::Zero(1);
    modes.mean_phonons = Eigen::VectorXd::Zero(1);
    modes.axes = {Axis::x};
    const auto kernels = KernelSet::build_uniform(modes, dt, 1, {0});
    // scaled-time entry: (1/2) * segment width of 1
    CHECK(std::abs(kernels.displacement_kernel()(0, 0) - Complex{0.5, 0.0}) < 1e-15);
  }
  SUBCASE("a full period integrates to zero") {
    const double dt = 2.5e-6;
    const double delta = two_pi / dt;
    ModeData modes;
    modes.frequencies = Eigen::VectorXd::Constant(1, 1.0);
    modes.eigenvectors = Eigen::MatrixXd::Ones(1, 1);
    modes.lamb_dicke = Eigen::MatrixXd::Constant(1, 1, 0.1);
    modes.detunings = Eigen::VectorXd::Constant(1, delta);
    modes.mean_phonons = Eigen::VectorXd::Zero(1);
    modes.axes = {Axis::x};
    const auto kernels = KernelSet::build_uniform(modes, dt, 1, {0});
    CHECK(std::abs(kernels.displacement_kernel()(0, 0)) < 1e-15);
  }
  SUBCASE("both branches of the primitives agree with quadrature near the switch") {
    const Complex i{0.0, 1.0};
    for (double h : {0.3, 1.0}) {
      for (double x : {0.2e-6, 0.99e-6, 1.01e-6, 5e-6}) {
        const double d = x / h;
        const Complex e0 = oracle::integrate(
            [&](double s) { return std::exp(i * d * s); }, 0.0, h, 1e-18);
        CHECK(std::abs(segment_integrals::exp_moment0(d, h) - e0) < 1e-14 * h);
        const Complex e1 = oracle::integrate(
            [&](double s) { return s * std::exp(i * d * s); }, 0.0, h, 1e-18);
        CHECK(std::abs(segment_integrals::exp_moment1(d, h) - e1) < 1e-14 * h * h);
        const Complex tri = oracle::integrate(
            [&](double s) {
              return std::exp(i * d * s) *
                     oracle::integrate(
                         [&](double t) { return std::exp(-i * d * t); }, 0.0, s, 1e-19);
            },
            0.0, h, 1e-18);
        CHECK(std::abs(segment_integrals::triangle(d, h) - tri) < 1e-14 * h * h);
      }
    }
  }
}

TEST_CASE("kernel entries match adaptive quadrature on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> ion_count(1, 4);
  std::uniform_int_distribution<int> seg_count(1, 10);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int instance = 0; instance < 10; ++instance) {
    const int n = ion_count(rng);
    const int s = seg_count(rng);
    const double duration = 20e-6 + 80e-6 * unit(rng);
    const auto modes = helpers::synthetic_modes(rng, n, 3, duration);
    std::vector<int> ions(n);
    for (int j = 0; j < n; ++j) ions[j] = j;
    auto drive = helpers::random_drive(rng, ions, s, duration,
                                       units::khz_to_rads(150.0), true);
    const auto kernels = KernelSet::build(modes, duration, drive.boundaries, ions);

    // oracle refinement tolerances follow the physical scale of each entry so
    // the nondimensional comparison keeps meaning
    const double tol1 = 1e-15 * duration;
    const double tol2 = 1e-15 * duration * duration;
    for (int p = 0; p < modes.n_modes(); ++p) {
      const double delta = modes.detunings[p];
      for (int k = 0; k < s; ++k) {
        const Complex expected = oracle::displacement_entry(
            delta, drive.boundaries[k], drive.boundaries[k + 1], tol1);
        CHECK(std::abs(kernels.displacement_kernel()(p, k) - expected / duration) < 1e-12);
        const Complex com = oracle::com_entry(delta, drive.boundaries, k, duration, tol2);
        CHECK(std::abs(kernels.com_kernel()(p, k) - com / (duration * duration)) < 1e-11);
      }
    }
    if (n >= 2) {
      // one pair per instance keeps the nested quadrature affordable
      const auto& pk = kernels.pair_phase_kernel(0, 1);
      for (int k = 0; k < s; ++k) {
        for (int l = 0; l < s; ++l) {
          Complex expected{0.0, 0.0};
          for (int p = 0; p < modes.n_modes(); ++p) {
            if (l > k) break;
            expected += 0.25 * modes.lamb_dicke(0, p) * modes.lamb_dicke(1, p) *
                        oracle::ordered_pair_entry(modes.detunings[p],
                                                   drive.boundaries, k, l, tol2);
          }
          CHECK(std::abs(pk(k, l) - expected / (duration * duration)) < 1e-11);
        }
      }
    }
  }
}

TEST_CASE("phase kernel is causal and factorizes across disjoint segments") {
  std::mt19937_64 rng(5);
  const double duration = 60e-6;
  const auto modes = helpers::synthetic_modes(rng, 2, 4, duration);
  const auto kernels = KernelSet::build_uniform(modes, duration, 6, {0, 1});
  const auto& pk = kernels.pair_phase_kernel(0, 1);
  for (int k = 0; k < 6; ++k)
    for (int l = k + 1; l < 6; ++l) CHECK(pk(k, l) == Complex{0.0, 0.0});
  // strictly later segment: product of the two single-segment carrier integrals
  const auto& m = kernels.displacement_kernel();
  for (int k = 1; k < 6; ++k) {
    for (int l = 0; l < k; ++l) {
      Complex expected{0.0, 0.0};
      for (int p = 0; p < modes.n_modes(); ++p)
        expected += 0.25 * modes.lamb_dicke(0, p) * modes.lamb_dicke(1, p) *
                    (2.0 * m(p, k)) * std::conj(2.0 * m(p, l));
      CHECK(std::abs(pk(k, l) - expected) < 1e-14);
    }
  }
}

TEST_CASE("displacements: zero drive, constant drive, linearity") {
  const auto setup = helpers::pair_setup(2, 8, 40e-6);

  SUBCASE("zero drive gives zero displacement") {
    auto drive = constant_drive({0, 1}, 8, 40e-6, 0.0);
    CHECK(setup.kernels.displacements(drive).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("constant drive matches the direct integral") {
    const double omega = units::khz_to_rads(80.0);
    auto drive = constant_drive({0, 1}, 8, 40e-6, omega);
    const auto alpha = setup.kernels.displacements(drive);
    for (int p = 0; p < setup.modes.n_modes(); ++p) {
      const double delta = setup.modes.detunings[p];
      const Complex expected = 0.5 * omega *
                               (std::polar(1.0, delta * 40e-6) - 1.0) /
                               (Complex{0.0, 1.0} * delta);
      CHECK(std::abs(alpha(0, p) - expected) < 1e-9 * std::abs(expected));
    }
  }
  SUBCASE("scaling the drive scales alpha exactly") {
    std::mt19937_64 rng(17);
    auto drive = helpers::random_drive(rng, {0, 1}, 8, 40e-6, units::khz_to_rads(90.0));
    auto scaled = drive;
    scaled.amplitudes *= 3.0;
    const auto a1 = setup.kernels.displacements(drive);
    const auto a3 = setup.kernels.displacements(scaled);
    CHECK((a3 - 3.0 * a1).cwiseAbs().maxCoeff() < 1e-12 * a3.cwiseAbs().maxCoeff());
  }
  SUBCASE("superposition over two drives") {
    std::mt19937_64 rng(19);
    auto d1 = helpers::random_drive(rng, {0, 1}, 8, 40e-6, units::khz_to_rads(90.0));
    auto d2 = helpers::random_drive(rng, {0, 1}, 8, 40e-6, units::khz_to_rads(90.0));
    // combine at the complex-control level
    const Eigen::MatrixXcd u1 = d1.controls(), u2 = d2.controls();
    const Eigen::MatrixXcd sum = 0.5 * u1 + 2.0 * u2;
    DriveWaveform combined = d1;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 8; ++k) {
        combined.amplitudes(j, k) = std::abs(sum(j, k));
        combined.phases(j, k) = std::arg(sum(j, k));
      }
    const Eigen::MatrixXcd lhs = setup.kernels.displacements(combined);
    const Eigen::MatrixXcd rhs = 0.5 * setup.kernels.displacements(d1) +
                                 2.0 * setup.kernels.displacements(d2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10 * rhs.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("entangling phases: invariances") {
  const auto setup = helpers::pair_setup(2, 12, 40e-6);
  std::mt19937_64 rng(23);
  auto drive = helpers::random_drive(rng, {0, 1}, 12, 40e-6, units::khz_to_rads(90.0));

  SUBCASE("zero drive accumulates no phase") {
    auto zero = constant_drive({0, 1}, 12, 40e-6, 0.0);
    CHECK(setup.kernels.entangling_phases(zero).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("a global phase offset leaves the entangling phase unchanged") {
    auto shifted = drive;
    shifted.phases.array() += 1.2345;
    const auto p1 = setup.kernels.entangling_phases(drive);
    const auto p2 = setup.kernels.entangling_phases(shifted);
    CHECK(std::abs(p1(0, 1) - p2(0, 1)) < 1e-12 * std::max(1.0, std::abs(p1(0, 1))));
    // |alpha| is invariant too
    const auto a1 = setup.kernels.displacements(drive);
    const auto a2 = setup.kernels.displacements(shifted);
    CHECK((a1.cwiseAbs() - a2.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("amplitude scaling rescales the phase quadratically") {
    auto scaled = drive;
    scaled.amplitudes *= 1.7;
    const double p1 = setup.kernels.entangling_phases(drive)(0, 1);
    const double p2 = setup.kernels.entangling_phases(scaled)(0, 1);
    CHECK(std::abs(p2 - 1.7 * 1.7 * p1) < 1e-12 * std::abs(p2));
  }
  SUBCASE("matches the nested quadrature oracle") {
    double expected = 0.0;
    for (int p = 0; p < setup.modes.n_modes(); ++p) {
      expected += oracle::pair_phase(drive, 0, 1, setup.modes.lamb_dicke(0, p),
                                     setup.modes.lamb_dicke(1, p),
                                     setup.modes.detunings[p], drive.duration);
      expected += oracle::pair_phase(drive, 1, 0, setup.modes.lamb_dicke(1, p),
                                     setup.modes.lamb_dicke(0, p),
                                     setup.modes.detunings[p], drive.duration);
    }
    CHECK(std::abs(setup.kernels.entangling_phases(drive)(0, 1) - expected) < 1e-9);
  }
}

TEST_CASE("center-of-mass residuals") {
  const auto setup = helpers::pair_setup(2, 8, 40e-6);

  SUBCASE("zero drive has zero residual") {
    auto zero = constant_drive({0, 1}, 8, 40e-6, 0.0);
    CHECK(setup.kernels.com_residuals(zero).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("constant drive matches the closed-form trajectory integral") {
    const double omega = units::khz_to_rads(70.0);
    const double tau = 40e-6;
    auto drive = constant_drive({0, 1}, 8, tau, omega);
    const auto com = setup.kernels.com_residuals(drive);
    for (int p = 0; p < setup.modes.n_modes(); ++p) {
      const Complex i{0.0, 1.0};
      const double delta = setup.modes.detunings[p];
      // int_0^tau alpha(t) dt for alpha(t) = (omega/2)(e^{i d t} - 1)/(i d)
      const Complex expected = 0.5 * omega *
                               ((std::polar(1.0, delta * tau) - 1.0) / (i * delta) - tau) /
                               (i * delta);
      CHECK(std::abs(com(1, p) - expected) < 1e-9 * std::max(1e-12, std::abs(expected)));
    }
  }
  SUBCASE("random drive matches the nested quadrature oracle") {
    std::mt19937_64 rng(29);
    auto drive = helpers::random_drive(rng, {0, 1}, 8, 40e-6, units::khz_to_rads(90.0));
    const auto com = setup.kernels.com_residuals(drive);
    for (int p = 0; p < setup.modes.n_modes(); p += 3) {
      const Complex expected =
          oracle::com_of_trajectory(drive, 0, setup.modes.detunings[p]);
      CHECK(std::abs(com(0, p) - expected) < 1e-9);
    }
  }
}

TEST_CASE("t-weighted closure integrals match quadrature") {
  const auto setup = helpers::pair_setup(2, 8, 40e-6);
  std::mt19937_64 rng(31);
  auto drive = helpers::random_drive(rng, {0, 1}, 8, 40e-6, units::khz_to_rads(90.0));
  const auto tw = setup.kernels.t_weighted_integrals(drive);
  for (int p = 0; p < setup.modes.n_modes(); p += 2) {
    const Complex expected = oracle::t_weighted(drive, 1, setup.modes.detunings[p]);
    CHECK(std::abs(tw(1, p) - expected) < 1e-9);
  }
}

TEST_CASE("trajectory and phase series are piecewise exact") {
  const auto setup = helpers::pair_setup(2, 10, 50e-6);
  std::mt19937_64 rng(37);
  auto drive = helpers::random_drive(rng, {0, 1}, 10, 50e-6, units::khz_to_rads(90.0));

  SUBCASE("t = 0 samples vanish") {
    const auto series = trajectory_series(drive, setup.modes, {0.0});
    CHECK(series.alpha[0].cwiseAbs().maxCoeff() == 0.0);
    const auto phases = phase_series(drive, setup.modes, {0.0});
    CHECK(phases.phases[0].cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("t = tau matches the end-of-gate kernel evaluations") {
    const auto series = trajectory_series(drive, setup.modes, {50e-6});
    const auto endpoint = setup.kernels.displacements(drive);
    CHECK((series.alpha[0] - endpoint).cwiseAbs().maxCoeff() < 1e-12);
    const auto phases = phase_series(drive, setup.modes, {50e-6});
    const auto end_phases = setup.kernels.entangling_phases(drive);
    CHECK((phases.phases[0] - end_phases).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("mid-segment samples match quadrature") {
    const std::vector<double> times = {3.7e-6, 12.34e-6, 25e-6, 43.21e-6};
    const auto series = trajectory_series(drive, setup.modes, times);
    const auto phases = phase_series(drive, setup.modes, times);
    for (size_t i = 0; i < times.size(); ++i) {
      for (int p = 0; p < setup.modes.n_modes(); p += 4) {
        const Complex expected =
            oracle::alpha(drive, 0, setup.modes.detunings[p], times[i]);
        CHECK(std::abs(series.alpha[i](0, p) - expected) < 1e-10);
      }
    }
    double expected_phase = 0.0;
    for (int p = 0; p < setup.modes.n_modes(); ++p) {
      expected_phase += oracle::pair_phase(drive, 0, 1, setup.modes.lamb_dicke(0, p),
                                           setup.modes.lamb_dicke(1, p),
                                           setup.modes.detunings[p], times[1]);
      expected_phase += oracle::pair_phase(drive, 1, 0, setup.modes.lamb_dicke(1, p),
                                           setup.modes.lamb_dicke(0, p),
                                           setup.modes.detunings[p], times[1]);
    }
    CHECK(std::abs(phases.phases[1](0, 1) - expected_phase) < 1e-9);
  }
  SUBCASE("samples outside the gate are rejected") {
    CHECK_THROWS_AS(trajectory_series(drive, setup.modes, {60e-6}), validation_error);
    CHECK_THROWS_AS(trajectory_series(drive, setup.modes, {-1e-6}), validation_error);
  }
  SUBCASE("unsorted sample lists come back in input order") {
    const std::vector<double> times = {40e-6, 5e-6, 20e-6};
    const auto series = trajectory_series(drive, setup.modes, times);
    const auto sorted = trajectory_series(drive, setup.modes, {5e-6, 20e-6, 40e-6});
    CHECK((series.alpha[0] - sorted.alpha[2]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((series.alpha[1] - sorted.alpha[0]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("grid mismatches are rejected") {
  const auto setup = helpers::pair_setup(2, 8, 40e-6);
  auto drive = constant_drive({0, 1}, 8, 39e-6, 1.0);
  CHECK_THROWS_AS(setup.kernels.displacements(drive), validation_error);
  auto wrong_ions = constant_drive({0}, 8, 40e-6, 1.0);
  CHECK_THROWS_AS(setup.kernels.displacements(wrong_ions), validation_error);
}
