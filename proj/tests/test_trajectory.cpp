#include <doctest.h>

#include <cmath>
#include <random>

#include "qaction/trajectory.hpp"

using namespace qa;

namespace {

ActionParams harmonic() { return make_action(1.0, PotentialSpec{{2, 0.5}}); }
ActionParams free_particle() { return make_action(1.0, PotentialSpec{}); }
ActionParams inverse_square() { return make_action(1.0, PotentialSpec{{2, 0.5}, {-2, 1.0}}); }

double harmonic_path(double a, double b, double T, double t) {
  return (a * std::sinh(T - t) + b * std::sinh(t)) / std::sinh(T);
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("time grid sizes") {
  const auto g = TimeGrid::proportional(1.0, 500);
  CHECK(g.points() == 501);
  CHECK(g.step() == doctest::Approx(2e-3));
  CHECK(TimeGrid::proportional(4.0, 500).points() == 2001);
  CHECK(TimeGrid::fixed(0.3, 10).step() == doctest::Approx(0.03));
  CHECK_THROWS_AS(TimeGrid::proportional(0.0, 500), InputError);
  CHECK_THROWS_AS(TimeGrid::fixed(1.0, 0), InputError);
}

TEST_CASE("solve_bvp examples") {
  const auto grid = TimeGrid::proportional(1.0, 500);
  const auto h = solve_bvp(harmonic(), 1.0, 1.0, grid);
  // The discrete solution deviates from the continuum one by O(dt^2) ~ 4e-7 * x.
  double worst = 0.0;
  for (int i = 0; i < grid.points(); ++i)
    worst = std::max(worst, std::abs(h[i] - harmonic_path(1, 1, 1, grid.time(i))));
  CHECK(worst < 1e-6);
  CHECK(h.start() == 1.0);
  CHECK(h.end() == 1.0);

  const auto f = solve_bvp(free_particle(), 1.0, 2.0, grid);
  for (int i = 0; i < grid.points(); ++i) CHECK(std::abs(f[i] - (1.0 + grid.time(i))) < 1e-13);

  const double xm = potential_minimum(inverse_square()).x_min;
  const auto c = solve_bvp(inverse_square(), xm, xm, grid);
  for (int i = 0; i < grid.points(); ++i) CHECK(std::abs(c[i] - xm) <= 1e-12);
}

TEST_CASE("discrete solution converges to the continuum path at second order") {
  double prev = 0.0;
  for (int n : {100, 200, 400}) {
    const auto grid = TimeGrid::proportional(1.0, n);
    const auto h = solve_bvp(harmonic(), 1.0, 1.0, grid);
    const double mid = std::abs(h[grid.segments() / 2] - harmonic_path(1, 1, 1, 0.5));
    if (prev > 0.0) CHECK(prev / mid == doctest::Approx(4.0).epsilon(0.02));
    prev = mid;
  }
}

TEST_CASE("solve_bvp stays on the half-line near the wall") {
  const auto q = make_action(1.0, PotentialSpec{{2, 0.5}, {-2, 6.85}});
  const auto grid = TimeGrid::proportional(4.0, 500);
  const auto r = solve_bvp_detailed(q, 0.2, 2.5, grid);
  CHECK(r.converged);
  for (double x : r.trajectory.positions()) CHECK(x > 0.0);
  CHECK_THROWS_AS(solve_bvp(q, -0.1, 1.0, grid), InputError);
}

TEST_CASE("non-convergence is reported") {
  const auto q = make_action(1.0, PotentialSpec{{2, 0.5}, {4, 0.3}, {-2, 1.0}});
  const auto grid = TimeGrid::proportional(2.0, 200);
  BvpOptions opt;
  opt.max_iterations = 1;
  opt.throw_on_failure = false;
  const auto r = solve_bvp_detailed(q, 0.5, 3.0, grid, nullptr, opt);
  CHECK_FALSE(r.converged);
  opt.throw_on_failure = true;
  CHECK_THROWS_AS(solve_bvp_detailed(q, 0.5, 3.0, grid, nullptr, opt), NumericalError);
}

TEST_CASE("action_value examples") {
  const auto grid = TimeGrid::proportional(1.0, 500);
  const double exact = (2.0 * std::cosh(1.0) - 2.0) / (2.0 * std::sinh(1.0));
  CHECK(std::abs(action_value(harmonic(), solve_bvp(harmonic(), 1, 1, grid)) - exact) <= 1e-6);
  CHECK(exact == doctest::Approx(0.462117).epsilon(1e-6));

  CHECK(action_value(free_particle(), solve_bvp(free_particle(), 1, 2, grid)) == doctest::Approx(0.5).epsilon(1e-13));

  const auto shifted = make_action(1.0, PotentialSpec{{0, 0.75}});
  const auto t3 = TimeGrid::proportional(3.0, 100);
  CHECK(action_value(shifted, solve_bvp(shifted, 0.4, 1.3, t3)) ==
        doctest::Approx(0.9 * 0.9 / 6.0 + 0.75 * 3.0).epsilon(1e-13));

  auto with_hbar = harmonic();
  with_hbar.hbar = 2.0;
  const auto traj = solve_bvp(harmonic(), 1, 1, grid);
  CHECK(action_value(with_hbar, traj) == doctest::Approx(action_value(harmonic(), traj) / 2.0));
}

TEST_CASE("Richardson ratio of the harmonic action") {
  const double exact = (2.0 * std::cosh(1.0) - 2.0) / (2.0 * std::sinh(1.0));
  auto err = [&](int n) {
    return action_value(harmonic(), solve_bvp(harmonic(), 1, 1, TimeGrid::proportional(1.0, n))) - exact;
  };
  const double e1 = err(50), e2 = err(100), e4 = err(200);
  const double ratio = (e1 - e2) / (e2 - e4);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("sensitivities examples") {
  const auto grid = TimeGrid::proportional(1.0, 500);
  const auto bundle = solve_bundle(free_particle(), 1.0, 2.0, grid);
  const auto s = sensitivities(free_particle(), bundle);
  CHECK(s.d_mass == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(s.coeff(0) == 1.0);
  CHECK(s.d_x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(s.d_xx - 1.0) < 1e-9);

  const auto hb = solve_bundle(harmonic(), 1.0, 1.0, TimeGrid::proportional(2.5, 200));
  CHECK(sensitivities(harmonic(), hb).coeff(0) == 2.5);
  auto hbar2 = harmonic();
  hbar2.hbar = 2.0;
  CHECK(sensitivities(hbar2, solve_bundle(hbar2, 1, 1, TimeGrid::proportional(2.5, 200))).coeff(0) == 1.25);
}

TEST_CASE("harmonic d_time matches finite differences in T") {
  const double T = 1.0, dT = 1e-4;
  // Fixed segment count so only the duration changes.
  auto value = [&](double t) {
    const auto g = TimeGrid::fixed(t, 500);
    return action_value(harmonic(), solve_bvp(harmonic(), 1, 1, g));
  };
  const auto s = sensitivities(harmonic(), solve_bundle(harmonic(), 1, 1, TimeGrid::fixed(T, 500)));
  const double fd = (value(T + dT) - value(T - dT)) / (2 * dT);
  CHECK(std::abs(s.d_time - fd) <= 1e-6);
  // Continuum value: -E with E = (1/2) xdot^2 - V conserved.
  const double v0 = (-std::cosh(1.0) + 1.0) / std::sinh(1.0);  // xdot(0)
  CHECK(std::abs(s.d_time + (0.5 * v0 * v0 - 0.5)) < 1e-5);
}

TEST_CASE("every sensitivity matches finite differences of the action") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> c(0.3, 1.5), ends(0.6, 2.4), dur(0.3, 2.0);
  for (int trial = 0; trial < 12; ++trial) {
    PotentialSpec spec{{2, c(rng)}, {-2, c(rng)}, {4, 0.05 * c(rng)}, {0, c(rng) - 0.9}};
    const auto q = make_action(c(rng), spec);
    const double a = ends(rng), b = ends(rng), T = dur(rng);
    const auto grid = TimeGrid::fixed(T, 300);
    const auto bundle = solve_bundle(q, a, b, grid);
    const auto s = sensitivities(q, bundle);
    const double eps = 1e-5;
    auto action_for = [&](const ActionParams& p, double bb, const TimeGrid& g) {
      return action_value(p, solve_bvp(p, a, bb, g, &bundle.centre));
    };
    auto check_fd = [&](double fd, double analytic, const char* what) {
      INFO(what << " trial " << trial << " fd=" << fd << " exact=" << analytic);
      CHECK(std::abs(fd - analytic) <= 1e-6 * std::max(1.0, std::abs(analytic)));
    };

    auto up = q, dn = q;
    up.mass += eps;
    dn.mass -= eps;
    check_fd((action_for(up, b, grid) - action_for(dn, b, grid)) / (2 * eps), s.d_mass, "mass");
    for (int k : {-2, 0, 2, 4}) {
      auto pu = q, pd = q;
      pu.potential.set(k, q.potential.coefficient(k) + eps);
      pd.potential.set(k, q.potential.coefficient(k) - eps);
      check_fd((action_for(pu, b, grid) - action_for(pd, b, grid)) / (2 * eps), s.coeff(k), "coeff");
    }
    check_fd((action_for(q, b, TimeGrid::fixed(T + eps, 300)) - action_for(q, b, TimeGrid::fixed(T - eps, 300))) /
                 (2 * eps),
             s.d_time, "time");
    check_fd((action_for(q, b + eps, grid) - action_for(q, b - eps, grid)) / (2 * eps), s.d_x, "x");
    // d_xx against a wider second difference of the action itself.
    const double e2 = 1e-3;
    const double fd2 =
        (action_for(q, b + e2, grid) - 2 * s.value + action_for(q, b - e2, grid)) / (e2 * e2);
    INFO("d_xx fd=" << fd2 << " exact=" << s.d_xx);
    CHECK(std::abs(fd2 - s.d_xx) <= 1e-5 * std::max(1.0, std::abs(s.d_xx)));
    CHECK(s.d_mass >= 0.0);
  }
}

TEST_CASE("action is stationary and minimal for convex potentials") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> pert(-1e-3, 1e-3);
  const auto q = inverse_square();
  const auto grid = TimeGrid::proportional(1.5, 200);
  const auto traj = solve_bvp(q, 0.8, 2.0, grid);
  const double base = action_value(q, traj);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(traj.positions().begin(), traj.positions().end());
    for (std::size_t i = 1; i + 1 < x.size(); ++i) x[i] += pert(rng);
    CHECK(action_value(q, Trajectory(grid, x)) >= base - 1e-10);
  }
}

TEST_CASE("time reversal leaves the action unchanged") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ends(0.4, 3.0);
  const auto q = make_action(1.3, PotentialSpec{{2, 0.7}, {-2, 1.6}, {4, 0.02}});
  for (int trial = 0; trial < 10; ++trial) {
    const double a = ends(rng), b = ends(rng);
    const auto grid = TimeGrid::proportional(1.2, 300);
    const double ab = action_value(q, solve_bvp(q, a, b, grid));
    const double ba = action_value(q, solve_bvp(q, b, a, grid));
    CHECK(std::abs(ab - ba) <= 1e-12 * std::max(1.0, std::abs(ab)));
  }
}

TEST_CASE("conserved_energy_drift") {
  const auto grid = TimeGrid::proportional(1.0, 500);
  // The exact continuum path sampled on the grid is not a discrete solution,
  // so the centred-velocity energy picks up an O(dt^2) ripple (~4e-8 here).
  std::vector<double> exact(grid.points());
  for (int i = 0; i < grid.points(); ++i) exact[i] = harmonic_path(1, 1, 1, grid.time(i));
  CHECK(conserved_energy_drift(harmonic(), Trajectory(grid, exact)) <= 1e-7);

  CHECK(conserved_energy_drift(harmonic(), solve_bvp(harmonic(), 1, 1, grid)) <= 1e-8);
  CHECK(conserved_energy_drift(free_particle(), solve_bvp(free_particle(), 1, 2, grid)) <= 1e-12);

  for (double b : {0.8, 1.5, 3.0}) {
    const auto t = solve_bvp(inverse_square(), 1.0, b, TimeGrid::proportional(2.0, 500));
    CHECK(conserved_energy_drift(inverse_square(), t) <= 1e-8);
  }
  // Closer to the wall the O(dt^4) remainder of the modified energy shows.
  double prev = 0.0;
  for (int n : {250, 500, 1000}) {
    const double d = conserved_energy_drift(inverse_square(), solve_bvp(inverse_square(), 1.0, 0.5, TimeGrid::proportional(2.0, n)));
    if (prev > 0.0) CHECK(prev / d > 12.0);
    prev = d;
  }
  CHECK(prev <= 1e-8);

  const auto q = make_action(1.0, PotentialSpec{{2, 0.5}, {4, 0.3}, {-2, 1.0}});
  BvpOptions one;
  one.max_iterations = 1;
  one.throw_on_failure = false;
  const auto r = solve_bvp_detailed(q, 0.5, 3.0, TimeGrid::proportional(2.0, 200), nullptr, one);
  CHECK(conserved_energy_drift(q, r.trajectory) > 1e-4);
}

TEST_CASE("trajectory csv") {
  const auto t = solve_bvp(free_particle(), 1, 2, TimeGrid::fixed(1.0, 4));
  const auto csv = trajectory_csv(t);
  CHECK(csv.rfind("t,x\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("mismatched grids are rejected") {
  const auto grid = TimeGrid::fixed(1.0, 10);
  CHECK_THROWS_AS(Trajectory(grid, std::vector<double>(5, 1.0)), InputError);
  const auto c = solve_bvp(harmonic(), 1, 1, grid);
  const auto other = solve_bvp(harmonic(), 1, 1, TimeGrid::fixed(1.0, 12));
  CHECK_THROWS_AS(sensitivities(harmonic(), c, other, other), InputError);
  (void)rel;
}
