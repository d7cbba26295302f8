#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qaction/analytic.hpp"
#include "qaction/oracle.hpp"

using namespace qa;

namespace {

ActionParams standard() { return inverse_square_model(1.0, 1.0, 1.0); }
double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("box spectrum for V = 0") {
  const auto model = make_action(1.0, PotentialSpec{});
  const auto grid = SpatialGrid::uniform(0.01, 1.99, 0.01);  // walls at 0 and 2
  const auto d = spectrum(discretize(model, grid), 5);
  for (int n = 1; n <= 5; ++n) {
    const double box = 0.5 * std::pow(n * std::numbers::pi / 2.0, 2);
    // Exact 3-point eigenvalues: (2/h^2) sin^2(n pi h / 2L) / m * hbar^2 / 2 * 2.
    const double discrete = 2.0 / (0.01 * 0.01) * std::pow(std::sin(n * std::numbers::pi * 0.01 / 4.0), 2);
    CHECK(rel(d.energies[n - 1], discrete) < 1e-10);
    CHECK(rel(d.energies[n - 1], box) < 1e-3);
  }
}

TEST_CASE("full-line harmonic ground energy") {
  const auto model = make_action(1.0, PotentialSpec{{2, 0.5}});
  const auto d = spectrum(discretize(model, SpatialGrid::uniform(-12, 12, 0.01)), 4);
  CHECK(std::abs(d.energies[0] - 0.5) <= 1e-5);
  // Parity alternates.
  const int n = d.grid.n_points;
  for (int s = 0; s < 4; ++s) {
    const double sign = (s % 2 == 0) ? 1.0 : -1.0;
    for (int i = 0; i < n; i += 97) CHECK(std::abs(d.psi(s, i) - sign * d.psi(s, n - 1 - i)) < 1e-8);
  }
}

TEST_CASE("spectrum is orthonormal with small residuals") {
  const auto op = discretize(standard(), SpatialGrid::default_for(standard(), 0.01));
  const auto d = spectrum(op, 6);
  const int n = op.grid.n_points;
  for (int s = 0; s < 6; ++s) {
    if (s > 0) CHECK(d.energies[s] > d.energies[s - 1]);
    for (int t = 0; t <= s; ++t) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += d.psi(s, i) * d.psi(t, i) * op.grid.spacing;
      CHECK(std::abs(dot - (s == t ? 1.0 : 0.0)) < 1e-10);
    }
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      double h = op.diagonal[i] * d.psi(s, i);
      if (i > 0) h += op.off_diagonal[i - 1] * d.psi(s, i - 1);
      if (i + 1 < n) h += op.off_diagonal[i] * d.psi(s, i + 1);
      worst = std::max(worst, std::abs(h - d.energies[s] * d.psi(s, i)));
    }
    CHECK(worst * std::sqrt(op.grid.spacing) <= 1e-10);
  }
}

TEST_CASE("inverse-square ground energies") {
  const auto d = spectrum(discretize(standard(), SpatialGrid::uniform(1e-3, 12, 5e-3)), 1);
  CHECK(std::abs(d.energies[0] - 2.5) <= 5e-4);
  const auto g0 = inverse_square_model(1.0, 1.0, 0.0);
  CHECK(std::abs(spectrum(discretize(g0, SpatialGrid::default_for(g0)), 1).energies[0] - 1.5) <= 5e-4);
}

TEST_CASE("ground energy converges at second order in the spacing") {
  // Grids share the wall at x = 0 so only the spacing changes.
  auto e0 = [](double h) { return spectrum(discretize(standard(), SpatialGrid::default_for(standard(), h)), 1).energies[0]; };
  const double a = e0(0.04), b = e0(0.02), c = e0(0.01);
  const double ratio = (a - b) / (b - c);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
  CHECK(std::abs(c - 2.5) < std::abs(a - 2.5));
}

TEST_CASE("amplitude agrees with the analytic kernel") {
  const SpectralOracle oracle(standard(), {});
  CHECK(rel(oracle.ground_energy(), 2.5) < 1e-7);
  for (double T : {0.2, 0.5, 1.0, 2.0, 4.0})
    for (double a : {0.5, 1.0, 2.0})
      for (double b : {0.7, 1.5, 2.5}) {
        INFO("T=" << T << " a=" << a << " b=" << b);
        CHECK(rel(oracle.amplitude(a, b, T), std::exp(euclidean_log_amplitude(standard(), a, b, T))) <= 1e-5);
      }
  CHECK(rel(oracle.amplitude(1, 2, 1), std::exp(euclidean_log_amplitude(standard(), 1, 2, 1))) <= 1e-5);
}

TEST_CASE("oracle time derivative matches the analytic one") {
  const SpectralOracle oracle(standard(), {});
  for (double T : {0.3, 1.0, 3.0}) {
    const double dT = 1e-5;
    const double fd = (euclidean_log_amplitude(standard(), 1.2, 1.9, T + dT) -
                       euclidean_log_amplitude(standard(), 1.2, 1.9, T - dT)) /
                      (2 * dT);
    CHECK(std::abs(oracle.log_amplitude_time_derivative(1.2, 1.9, T) - fd) < 1e-5 * std::abs(fd));
  }
}

TEST_CASE("amplitude reduces to the ground state at large T") {
  const auto d = spectrum_for_time(discretize(standard(), SpatialGrid::default_for(standard())), 0.2);
  for (double a : {0.8, 1.6})
    for (double b : {1.0, 2.2}) {
      const double g = amplitude(d, a, b, 12.0);
      const double ground = d.psi_at(0, a) * d.psi_at(0, b) * std::exp(-d.energies[0] * 12.0);
      CHECK(std::abs(g / ground - 1.0) <= 1e-6);
    }
}

TEST_CASE("amplitude symmetry and on-grid Chapman-Kolmogorov") {
  const auto op = discretize(standard(), SpatialGrid::default_for(standard(), 0.02));
  const auto d = spectrum_for_time(op, 0.3);
  for (double T : {0.3, 1.0})
    CHECK(std::abs(amplitude(d, 1.1, 2.3, T) - amplitude(d, 2.3, 1.1, T)) <=
          1e-12 * std::abs(amplitude(d, 1.1, 2.3, T)));

  // On the grid the kernel is a matrix; sum_c G(b,c) G(c,a) h = G(b,a).
  const int ia = 40, ib = 90;
  const double a = op.grid.node(ia), b = op.grid.node(ib);
  double sum = 0.0;
  for (int i = 0; i < op.grid.n_points; ++i) {
    const double c = op.grid.node(i);
    sum += amplitude(d, c, b, 0.4) * amplitude(d, a, c, 0.6) * op.grid.spacing;
  }
  CHECK(rel(sum, amplitude(d, a, b, 1.0)) <= 1e-8);
}

TEST_CASE("insufficient truncation is reported") {
  const auto d = spectrum(discretize(standard(), SpatialGrid::default_for(standard())), 5);
  CHECK_THROWS_AS(amplitude(d, 1.0, 1.0, 0.1), NumericalError);
  CHECK_NOTHROW(amplitude(d, 1.0, 1.0, 10.0));
}

TEST_CASE("fixed truncation grows toward the completeness sum as T shrinks") {
  const auto d = spectrum(discretize(standard(), SpatialGrid::default_for(standard())), 40);
  double completeness = 0.0;
  for (int n = 0; n < d.n_states(); ++n) completeness += d.psi_at(n, 1.3) * d.psi_at(n, 1.3);
  double prev = 0.0;
  for (double T : {2.0, 1.0, 0.6, 0.4}) {
    const double g = amplitude(d, 1.3, 1.3, T);
    CHECK(g > prev);
    CHECK(g < completeness);
    prev = g;
  }
}

TEST_CASE("quartic ground energy") {
  const auto quartic = make_action(1.0, PotentialSpec{{2, 1.0}, {4, 0.01}});
  SpectralOracle::Options coarse;
  coarse.spacing = 0.01;
  SpectralOracle::Options fine = coarse;
  fine.spacing = 0.005;
  const double e1 = SpectralOracle(quartic, coarse).ground_energy();
  const double e2 = SpectralOracle(quartic, fine).ground_energy();
  // V = x^2 + 0.01 x^4 has omega' = sqrt(2), so E0 sits just above 0.707.
  CHECK(e1 > 0.70);
  CHECK(e1 < 0.72);
  CHECK(std::abs(e1 - e2) <= 1e-6);
  // First-order perturbation theory about omega' = sqrt(2): 3 v4 / (4 m^2 omega'^2).
  CHECK(std::abs(e2 - (std::sqrt(2.0) / 2.0 + 3.0 * 0.01 / 8.0)) < 2e-4);
}

TEST_CASE("invalid grids") {
  CHECK_THROWS_AS(SpatialGrid::uniform(0, 1, 0.1), InputError);
  CHECK_THROWS_AS(SpatialGrid::uniform(-1, 5, 0.01).validate(standard()), InputError);
}
