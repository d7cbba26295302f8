#include "qaction/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qa {

namespace {

// Flat copy of the potential for the inner loops.
struct Poly {
  int n = 0;
  std::array<int, 7> k{};
  std::array<double, 7> c{};
  bool negative = false;

  explicit Poly(const PotentialSpec& spec) {
    for (const auto& [e, v] : spec.terms()) {
      k[n] = e;
      c[n] = v;
      if (e < 0) negative = true;
      ++n;
    }
  }

  // x^e for e in [-8, 6].
  static void powers(double x, std::array<double, 15>& p) {
    p[8] = 1.0;
    for (int e = 1; e <= 6; ++e) p[8 + e] = p[7 + e] * x;
    if (x != 0.0) {
      const double inv = 1.0 / x;
      for (int e = 1; e <= 8; ++e) p[8 - e] = p[9 - e] * inv;
    }
  }

  void eval(double x, double& v, double& d1, double& d2) const {
    std::array<double, 15> p;
    powers(x, p);
    v = d1 = d2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const int e = k[j];
      v += c[j] * p[8 + e];
      if (e != 0) {
        d1 += e * c[j] * p[7 + e];
        d2 += e * (e - 1) * c[j] * p[6 + e];
      }
    }
  }

  double value(double x) const {
    double v, d1, d2;
    eval(x, v, d1, d2);
    return v;
  }
};

double discrete_action(const Poly& poly, double mass, double dt, std::span<const double> x) {
  double kinetic = 0.0, potential = 0.0;
  const std::size_t n = x.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i + 1] - x[i];
    kinetic += dx * dx;
  }
  for (std::size_t i = 1; i < n; ++i) potential += poly.value(x[i]);
  potential += 0.5 * (poly.value(x[0]) + poly.value(x[n]));
  return mass * kinetic / (2.0 * dt) + dt * potential;
}

bool inside(const ActionParams& q, const std::vector<double>& x) {
  if (q.domain != Domain::HalfLine) return true;
  return std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });
}

}  // namespace

TimeGrid::TimeGrid(double duration, int segments) : duration_(duration), segments_(segments) {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw InputError("time grid duration must be positive");
  if (segments < 1) throw InputError("time grid needs at least one segment");
}

TimeGrid TimeGrid::proportional(double duration, int points_per_unit) {
  if (points_per_unit < 1) throw InputError("points per unit time must be positive");
  const long seg = std::lround(points_per_unit * duration);
  return TimeGrid(duration, static_cast<int>(std::max(1L, seg)));
}

TimeGrid TimeGrid::fixed(double duration, int segments) { return TimeGrid(duration, segments); }

Trajectory::Trajectory(TimeGrid grid, std::vector<double> positions)
    : grid_(grid), positions_(std::move(positions)) {
  if (static_cast<int>(positions_.size()) != grid_.points())
    throw InputError("trajectory length does not match its time grid");
}

std::vector<double> Trajectory::resampled(const TimeGrid& grid) const {
  std::vector<double> out(grid.points());
  const int n_old = grid_.segments();
  for (int i = 0; i < grid.points(); ++i) {
    const double s = static_cast<double>(i) / grid.segments() * n_old;
    const int j = std::min(static_cast<int>(s), n_old - 1);
    const double w = s - j;
    out[i] = (1.0 - w) * positions_[j] + w * positions_[j + 1];
  }
  return out;
}

BvpResult solve_bvp_detailed(const ActionParams& q, double a, double b, const TimeGrid& grid,
                             const Trajectory* guess, const BvpOptions& options) {
  q.validate();
  if (!q.in_domain(a) || !q.in_domain(b)) throw InputError("boundary point outside the domain");
  const Poly poly(q.potential);
  const int n = grid.segments();
  const double dt = grid.step();
  const double m = q.mass;

  std::vector<double> x(n + 1);
  bool seeded = false;
  if (guess) {
    x = guess->resampled(grid);
    const double da = a - x.front(), db = b - x.back();
    for (int i = 0; i <= n; ++i) {
      const double s = static_cast<double>(i) / n;
      x[i] += (1.0 - s) * da + s * db;
    }
    seeded = inside(q, x);
  }
  if (!seeded)
    for (int i = 0; i <= n; ++i) x[i] = a + (b - a) * static_cast<double>(i) / n;
  x.front() = a;
  x.back() = b;

  const double scale_x = std::max({1.0, std::abs(a), std::abs(b)});
  std::vector<double> grad(n + 1), diag(n + 1), rhs(n + 1), step(n + 1), trial(n + 1), cprime(n + 1);
  const double off = -m / dt;

  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  bool converged = false;
  double action = discrete_action(poly, m, dt, x);

  auto assemble = [&]() {
    double res = 0.0, xmax = scale_x;
    for (int i = 1; i < n; ++i) {
      double v, d1, d2;
      poly.eval(x[i], v, d1, d2);
      const double lap = x[i + 1] - 2.0 * x[i] + x[i - 1];
      res = std::max(res, std::abs(lap - dt * dt * d1 / m));
      grad[i] = -m * lap / dt + dt * d1;
      diag[i] = 2.0 * m / dt + dt * d2;
      xmax = std::max(xmax, std::abs(x[i]));
    }
    return res / xmax;
  };

  // Thomas algorithm for H step = -grad; a Levenberg shift restores
  // positive pivots where V'' < 0 makes the Hessian indefinite.
  auto newton_direction = [&]() {
    double shift = 0.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      bool ok = true;
      for (int i = 1; i < n; ++i) {
        const double di = diag[i] + shift - (i > 1 ? off * cprime[i - 1] : 0.0);
        if (!(di > 0.0)) {
          ok = false;
          break;
        }
        cprime[i] = off / di;
        rhs[i] = (-grad[i] - (i > 1 ? off * rhs[i - 1] : 0.0)) / di;
      }
      if (ok) break;
      shift = shift == 0.0 ? 1e-6 * m / dt : 4.0 * shift;
    }
    step[n - 1] = rhs[n - 1];
    for (int i = n - 2; i >= 1; --i) step[i] = rhs[i] - cprime[i] * step[i + 1];
    step[0] = step[n] = 0.0;
  };

  residual = n > 1 ? assemble() : 0.0;
  while (residual > options.tolerance && iter < options.max_iterations) {
    ++iter;
    newton_direction();
    // Backtrack until the path stays in the domain and the action does not
    // increase beyond rounding.
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (int i = 0; i <= n; ++i) trial[i] = x[i] + alpha * step[i];
      if (inside(q, trial)) {
        const double s_trial = discrete_action(poly, m, dt, trial);
        if (s_trial <= action + 1e-12 * std::abs(action) + 1e-300) {
          action = s_trial;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    x.swap(trial);
    residual = assemble();
  }
  // The stopping test is on dt^2-scaled residuals, so the force error can
  // still be ~tolerance / dt^2. Full Newton steps are kept while they help.
  if (residual <= options.tolerance && n > 1) {
    for (int polish = 0; polish < 3; ++polish) {
      newton_direction();
      for (int i = 0; i <= n; ++i) trial[i] = x[i] + step[i];
      if (!inside(q, trial)) break;
      x.swap(trial);
      const double r = assemble();
      if (!(r < residual)) {
        x.swap(trial);
        assemble();
        break;
      }
      residual = r;
    }
  }
  converged = residual <= options.tolerance;
  if (!converged && options.throw_on_failure)
    throw NumericalError("boundary value solve did not converge after " + std::to_string(iter) +
                         " Newton iterations (residual " + std::to_string(residual) + ")");
  return {Trajectory(grid, std::move(x)), iter, residual, converged};
}

Trajectory solve_bvp(const ActionParams& q, double a, double b, const TimeGrid& grid,
                     const Trajectory* guess, const BvpOptions& options) {
  return solve_bvp_detailed(q, a, b, grid, guess, options).trajectory;
}

double action_value(const ActionParams& q, const Trajectory& traj) {
  const Poly poly(q.potential);
  return discrete_action(poly, q.mass, traj.grid().step(), traj.positions()) / q.hbar;
}

double neighbour_step(double b) { return 1e-3 * std::max(1.0, std::abs(b)); }

TrajectoryBundle solve_bundle(const ActionParams& q, double a, double b, const TimeGrid& grid,
                              const TrajectoryBundle* guess, const BvpOptions& options) {
  const double h = neighbour_step(b);
  Trajectory centre = solve_bvp(q, a, b, grid, guess ? &guess->centre : nullptr, options);
  Trajectory lower = solve_bvp(q, a, b - h, grid, guess ? &guess->lower : &centre, options);
  Trajectory upper = solve_bvp(q, a, b + h, grid, guess ? &guess->upper : &centre, options);
  return {std::move(centre), std::move(lower), std::move(upper), h};
}

double endpoint_derivative(const ActionParams& q, const Trajectory& traj) {
  const Poly poly(q.potential);
  const int n = traj.grid().segments();
  const double dt = traj.grid().step();
  double v, d1, d2;
  poly.eval(traj[n], v, d1, d2);
  return (q.mass * (traj[n] - traj[n - 1]) / dt + 0.5 * dt * d1) / q.hbar;
}

ActionSensitivities sensitivities(const ActionParams& q, const Trajectory& traj,
                                  const Trajectory& lower, const Trajectory& upper) {
  if (!(lower.grid() == traj.grid()) || !(upper.grid() == traj.grid()))
    throw InputError("neighbour trajectories use a different time grid");
  if (lower.start() != traj.start() || upper.start() != traj.start())
    throw InputError("neighbour trajectories start elsewhere");
  const double h_lo = traj.end() - lower.end(), h_hi = upper.end() - traj.end();
  if (!(h_lo > 0.0) || !(h_hi > 0.0) || std::abs(h_lo - h_hi) > 1e-9 * std::max(h_lo, h_hi))
    throw InputError("neighbour endpoints must straddle the final point symmetrically");

  const Poly poly(q.potential);
  const int n = traj.grid().segments();
  const double dt = traj.grid().step();
  const double hbar = q.hbar;
  auto x = traj.positions();
  const bool positive = std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });

  ActionSensitivities s;
  s.value = action_value(q, traj);

  double kinetic = 0.0, energy_sum = 0.0;
  std::array<double, 15> p_prev, p_cur;
  Poly::powers(x[0], p_prev);
  double v_prev = poly.value(x[0]);
  std::array<double, ActionSensitivities::kCoefficients> moments{};
  for (int i = 0; i < n; ++i) {
    const double dx = x[i + 1] - x[i];
    kinetic += dx * dx;
    Poly::powers(x[i + 1], p_cur);
    const double v_cur = poly.value(x[i + 1]);
    for (int k = -6; k <= 6; k += 2) {
      if (k < 0 && !positive) continue;
      moments[ActionSensitivities::slot(k)] += 0.5 * (p_prev[8 + k] + p_cur[8 + k]);
    }
    energy_sum += 0.5 * q.mass * dx * dx / (dt * dt) - 0.5 * (v_prev + v_cur);
    p_prev = p_cur;
    v_prev = v_cur;
  }
  s.d_mass = kinetic / (2.0 * dt) / hbar;
  for (int k = -6; k <= 6; k += 2) {
    const int j = ActionSensitivities::slot(k);
    s.d_coeff[j] = (k < 0 && !positive) ? std::numeric_limits<double>::quiet_NaN()
                                        : moments[j] * dt / hbar;
  }
  s.d_coeff[ActionSensitivities::slot(0)] = traj.grid().duration() / hbar;
  // d/dT of the discrete action at fixed path and segment count.
  s.d_time = -energy_sum / n;
  s.d_x = endpoint_derivative(q, traj);
  s.d_xx = (endpoint_derivative(q, upper) - endpoint_derivative(q, lower)) / (h_lo + h_hi);
  return s;
}

ActionSensitivities sensitivities(const ActionParams& q, const TrajectoryBundle& bundle) {
  return sensitivities(q, bundle.centre, bundle.lower, bundle.upper);
}

double conserved_energy_drift(const ActionParams& q, const Trajectory& traj) {
  const Poly poly(q.potential);
  const int n = traj.grid().segments();
  if (n < 2) return 0.0;
  const double dt = traj.grid().step();
  const double m = q.mass;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 1; i < n; ++i) {
    double v, d1, d2;
    poly.eval(traj[i], v, d1, d2);
    const double vel = (traj[i + 1] - traj[i - 1]) / (2.0 * dt);
    const double e = 0.5 * m * vel * vel - v - dt * dt * (d2 * vel * vel / 12.0 + d1 * d1 / (24.0 * m));
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  return hi - lo;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream out;
  out.precision(17);
  out << "t,x\n";
  for (int i = 0; i < traj.grid().points(); ++i) out << traj.grid().time(i) << ',' << traj[i] << '\n';
  return out.str();
}

}  // namespace qa
