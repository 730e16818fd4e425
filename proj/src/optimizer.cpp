#include "ionpulse/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "ionpulse/analysis.hpp"
#include "ionpulse/units.hpp"

namespace ionpulse {

void OptimizationProblem::validate() const {
  if (!kernels) throw validation_error("optimization problem has no kernels");
  target.validate();
  if (kernels->ions() != target.addressed())
    throw validation_error("kernels were built for a different addressed set");
  scheme.validate(target.addressed());
  if (instance_count < 1) throw validation_error("instance_count must be >= 1");
  if (iteration_budget < 1) throw validation_error("iteration_budget must be >= 1");
  if (!(tolerance >= 0.0)) throw validation_error("tolerance must be non-negative");
  if (weights.phase < 0.0 || weights.motion < 0.0 || weights.com < 0.0)
    throw validation_error("cost weights must be non-negative");
  if (scheme.robust && !(weights.com > 0.0))
    throw validation_error("robust schemes need a positive COM weight");
}

CostEvaluator::CostEvaluator(const OptimizationProblem& problem)
    : problem_(problem),
      kernels_(*problem.kernels),
      param_(problem.scheme, problem.target.addressed(), problem.kernels->duration()) {
  problem.validate();
  const auto& ions = kernels_.ions();
  const int n = static_cast<int>(ions.size());
  psi_.resize(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) psi_(a, b) = problem.target.psi(ions[a], ions[b]);
  q_.reserve(n * (n - 1) / 2);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const Eigen::MatrixXcd& p = kernels_.pair_phase_kernel(a, b);
      q_.push_back(Complex{0.0, 1.0} * (p.conjugate() - p.transpose()));
    }
  }
  effective_com_weight_ = problem.scheme.robust ? problem.weights.com : 0.0;
}

CostBreakdown CostEvaluator::breakdown_from_drive(const DriveWaveform& drive) const {
  CostBreakdown out;
  const Eigen::MatrixXcd alpha = kernels_.displacements(drive);
  const Eigen::MatrixXd phases = kernels_.entangling_phases(drive);
  const int n = kernels_.n_addressed();
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double eps = psi_(a, b) - phases(a, b);
      out.phase_term += problem_.weights.phase * eps * eps;
    }
  out.motion_term = problem_.weights.motion * alpha.squaredNorm();
  if (effective_com_weight_ > 0.0) {
    // dimensionless COM residual: time-average of alpha, doubled
    const Eigen::MatrixXcd com =
        kernels_.com_residuals(drive) * (2.0 / kernels_.duration());
    out.com_term = effective_com_weight_ * com.squaredNorm();
  }
  return out;
}

CostBreakdown CostEvaluator::breakdown(const Eigen::VectorXd& theta) {
  return breakdown_from_drive(param_.drive(theta));
}

double CostEvaluator::cost(const Eigen::VectorXd& theta) {
  return breakdown(theta).total();
}

double CostEvaluator::cost_and_gradient(const Eigen::VectorXd& theta,
                                        Eigen::VectorXd& gradient_out) {
  const DriveWaveform drive = param_.drive(theta);
  const Eigen::MatrixXcd u = kernels_.scaled_controls(drive);
  const int n = kernels_.n_addressed();
  const int s = kernels_.n_segments();

  double total = 0.0;
  // complex cost gradient g with dC = Re[conj(g) . du], addressed x S
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(n, s);

  const Eigen::MatrixXcd alpha = u * kernels_.displacement_kernel().transpose();
  total += problem_.weights.motion * alpha.squaredNorm();
  g.noalias() +=
      (2.0 * problem_.weights.motion) * alpha * kernels_.displacement_kernel().conjugate();

  if (effective_com_weight_ > 0.0) {
    const Eigen::MatrixXcd com = u * kernels_.com_kernel().transpose();
    total += effective_com_weight_ * com.squaredNorm();
    g.noalias() += (2.0 * effective_com_weight_) * com * kernels_.com_kernel().conjugate();
  }

  int idx = 0;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b, ++idx) {
      const Eigen::MatrixXcd& p = kernels_.pair_phase_kernel(a, b);
      const Complex t1 = u.row(a) * (p * u.row(b).transpose().conjugate());
      const Complex t2 = u.row(b) * (p * u.row(a).transpose().conjugate());
      const double eps = psi_(a, b) - std::imag(t1 + t2);
      total += problem_.weights.phase * eps * eps;
      const double factor = -2.0 * problem_.weights.phase * eps;
      g.row(a).noalias() += factor * (q_[idx] * u.row(b).transpose()).transpose();
      g.row(b).noalias() += factor * (q_[idx] * u.row(a).transpose()).transpose();
    }
  }

  // chain rule to per-segment amplitude and phase, then through the scheme map
  Eigen::MatrixXd d_amp(n, s), d_phi(n, s);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < s; ++k) {
      const Complex gc = std::conj(g(j, k));
      const Complex unit = std::polar(kernels_.duration(), drive.phases(j, k));
      d_amp(j, k) = std::real(gc * unit);
      d_phi(j, k) = -std::imag(std::conj(g(j, k)) * u(j, k));
    }
  }
  gradient_out = param_.pullback(theta, d_amp, d_phi);
  return total;
}

Eigen::VectorXd CostEvaluator::gradient(const Eigen::VectorXd& theta) {
  Eigen::VectorXd g;
  cost_and_gradient(theta, g);
  return g;
}

double cost(const Eigen::VectorXd& theta, const OptimizationProblem& problem) {
  CostEvaluator evaluator(problem);
  return evaluator.cost(theta);
}

Eigen::VectorXd gradient(const Eigen::VectorXd& theta, const OptimizationProblem& problem) {
  CostEvaluator evaluator(problem);
  return evaluator.gradient(theta);
}

Eigen::VectorXd initial_guess(const Parametrization& param, std::mt19937_64& rng) {
  return param.random_guess(rng);
}

std::uint64_t instance_seed(std::uint64_t base_seed, int instance_index) {
  // splitmix64 over (seed, index) so instances draw independent streams
  std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ULL * (instance_index + 1ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// L-BFGS with a strong-Wolfe line search
// ---------------------------------------------------------------------------

namespace detail {

namespace {

struct LinePoint {
  double step = 0.0;
  double value = 0.0;
  double slope = 0.0;
};

double cubic_step(const LinePoint& a, const LinePoint& b) {
  // minimizer of the cubic interpolant; falls back to bisection
  const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
  const double disc = d1 * d1 - a.slope * b.slope;
  if (disc < 0.0) return 0.5 * (a.step + b.step);
  const double d2 = std::sqrt(disc) * (b.step > a.step ? 1.0 : -1.0);
  const double t =
      b.step - (b.step - a.step) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
  const double lo = std::min(a.step, b.step), hi = std::max(a.step, b.step);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin)
    return 0.5 * (a.step + b.step);
  return t;
}

} // namespace

LbfgsOutcome lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& value_and_gradient,
    Eigen::VectorXd x, const LbfgsOptions& options) {
  constexpr double wolfe_c1 = 1e-4;
  constexpr double wolfe_c2 = 0.9;
  const int dim = static_cast<int>(x.size());

  LbfgsOutcome out;
  Eigen::VectorXd grad(dim);
  double value = value_and_gradient(x, grad);
  if (!std::isfinite(value)) {
    out.diverged = true;
    out.best_x = x;
    out.best_cost = value;
    return out;
  }
  out.best_x = x;
  out.best_cost = value;

  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  Eigen::VectorXd direction(dim), x_new(dim), grad_new(dim);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (value < options.cost_tolerance) {
      out.converged = true;
      break;
    }
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) break;

    // two-loop recursion
    direction = -grad;
    const int hist = static_cast<int>(s_hist.size());
    std::vector<double> alpha_hist(hist);
    for (int i = hist - 1; i >= 0; --i) {
      alpha_hist[i] = rho_hist[i] * s_hist[i].dot(direction);
      direction -= alpha_hist[i] * y_hist[i];
    }
    if (hist > 0) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      direction *= gamma;
    }
    for (int i = 0; i < hist; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(direction);
      direction += (alpha_hist[i] - beta) * s_hist[i];
    }

    double slope0 = grad.dot(direction);
    if (!(slope0 < 0.0)) { // not a descent direction: restart from steepest
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      direction = -grad;
      slope0 = grad.dot(direction);
      if (!(slope0 < 0.0)) break;
    }

    // strong-Wolfe line search (bracket + zoom)
    bool accepted = false;
    double accepted_value = value;
    auto probe_point = [&](double step, LinePoint& pt) {
      x_new = x + step * direction;
      pt.step = step;
      pt.value = value_and_gradient(x_new, grad_new);
      pt.slope = std::isfinite(pt.value) ? grad_new.dot(direction) : 1.0;
    };
    auto zoom = [&](LinePoint a, LinePoint b) {
      for (int z = 0; z < 25; ++z) {
        LinePoint t;
        probe_point(cubic_step(a, b), t);
        if (!std::isfinite(t.value) || t.value > value + wolfe_c1 * t.step * slope0 ||
            t.value >= a.value) {
          b = t;
        } else {
          if (std::abs(t.slope) <= -wolfe_c2 * slope0) {
            accepted = true;
            accepted_value = t.value;
            return;
          }
          if (t.slope * (b.step - a.step) >= 0.0) b = a;
          a = t;
        }
        if (std::abs(b.step - a.step) < 1e-14 * std::max(1.0, std::abs(a.step))) break;
      }
      // interval collapsed: take the sufficient-decrease endpoint when it helps
      if (std::isfinite(a.value) && a.value < value && a.step > 0.0) {
        probe_point(a.step, a);
        accepted = true;
        accepted_value = a.value;
      }
    };

    LinePoint prev{0.0, value, slope0};
    // unit steps once curvature information exists; a gradient-scaled first
    // step keeps the initial probe from overshooting into flat regions
    double step = s_hist.empty() ? std::min(1.0, 1.0 / grad.norm()) : 1.0;
    for (int probe = 0; probe < 30 && !accepted; ++probe) {
      LinePoint pt;
      probe_point(step, pt);
      if (!std::isfinite(pt.value)) {
        step *= 0.3;
        continue;
      }
      if (pt.value > value + wolfe_c1 * step * slope0 ||
          (probe > 0 && pt.value >= prev.value)) {
        zoom(prev, pt);
        break;
      }
      if (std::abs(pt.slope) <= -wolfe_c2 * slope0) {
        accepted = true;
        accepted_value = pt.value;
        break;
      }
      if (pt.slope >= 0.0) {
        zoom(pt, prev);
        break;
      }
      prev = pt;
      step *= 2.0;
    }

    if (!accepted) break; // line search exhausted

    const Eigen::VectorXd s_vec = x_new - x;
    const Eigen::VectorXd y_vec = grad_new - grad;
    const double sy = s_vec.dot(y_vec);
    if (sy > 1e-14 * s_vec.norm() * y_vec.norm()) {
      s_hist.push_back(s_vec);
      y_hist.push_back(y_vec);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    x = x_new;
    grad = grad_new;
    value = accepted_value;
    out.iterations = iter + 1;
    out.history.push_back(value);
    if (value < out.best_cost) {
      out.best_cost = value;
      out.best_x = x;
    }
  }
  if (out.best_cost < options.cost_tolerance) out.converged = true;
  return out;
}

} // namespace detail

OptimizationResult optimize(const OptimizationProblem& problem) {
  problem.validate();
  const auto wall_start = std::chrono::steady_clock::now();

  struct InstanceResult {
    detail::LbfgsOutcome outcome;
    bool diverged = false;
  };
  std::vector<InstanceResult> results(problem.instance_count);

  auto run_instance = [&](int index) {
    CostEvaluator evaluator(problem);
    std::mt19937_64 rng(instance_seed(problem.rng_seed, index));
    const Eigen::VectorXd theta0 = evaluator.parametrization().random_guess(rng);
    detail::LbfgsOptions options;
    options.max_iterations = problem.iteration_budget;
    options.cost_tolerance = problem.tolerance;
    auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      return evaluator.cost_and_gradient(x, g);
    };
    results[index].outcome = detail::lbfgs_minimize(fn, theta0, options);
    results[index].diverged =
        results[index].outcome.diverged || !std::isfinite(results[index].outcome.best_cost);
  };

  const int workers = std::max(1, std::min(problem.threads, problem.instance_count));
  if (workers <= 1) {
    for (int i = 0; i < problem.instance_count; ++i) run_instance(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < problem.instance_count;
             i = next.fetch_add(1))
          run_instance(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  int best = -1;
  for (int i = 0; i < problem.instance_count; ++i) {
    if (results[i].diverged) continue;
    if (best < 0 || results[i].outcome.best_cost < results[best].outcome.best_cost)
      best = i;
  }
  if (best < 0)
    throw solver_error("every optimization instance diverged to non-finite cost");

  CostEvaluator evaluator(problem);
  OptimizationResult out;
  out.best_instance = best;
  out.seed = problem.rng_seed;
  out.best_drive = evaluator.parametrization().drive(results[best].outcome.best_x);
  out.final_cost = evaluator.breakdown_from_drive(out.best_drive);
  out.operational_infidelity =
      operational_infidelity(out.best_drive, *problem.kernels, problem.target).infidelity;
  for (int i = 0; i < problem.instance_count; ++i) {
    InstanceDiagnostics diag;
    diag.index = i;
    diag.final_cost = results[i].outcome.best_cost;
    diag.iterations = results[i].outcome.iterations;
    diag.converged = results[i].outcome.converged;
    diag.diverged = results[i].diverged;
    diag.cost_history = std::move(results[i].outcome.history);
    out.instances.push_back(std::move(diag));
  }
  out.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - wall_start)
                        .count();
  return out;
}

} // namespace ionpulse
