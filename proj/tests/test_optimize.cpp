#include <doctest.h>

#include <cmath>

#include "qaction/optimize.hpp"

using namespace qa;

TEST_CASE("quadratic bowl with anisotropic scales") {
  auto f = [](const std::vector<double>& x) {
    return std::pow(x[0] - 3.0, 2) + 100.0 * std::pow(x[1] + 0.01, 2) + 1e-4 * std::pow(x[2] - 500.0, 2);
  };
  const auto r = nelder_mead(f, {1.0, 0.02, 400.0}, {1.0, 0.01, 100.0});
  CHECK(r.converged);
  CHECK(std::abs(r.x[0] - 3.0) < 1e-6);
  CHECK(std::abs(r.x[1] + 0.01) < 1e-8);
  CHECK(std::abs(r.x[2] - 500.0) < 1e-4);
  CHECK(r.value < 1e-12);
}

TEST_CASE("Rosenbrock valley") {
  auto f = [](const std::vector<double>& x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  NelderMeadOptions o;
  o.initial_step = 0.5;
  const auto r = nelder_mead(f, {-1.2, 1.0}, {1.0, 1.0}, o);
  CHECK(r.converged);
  CHECK(std::abs(r.x[0] - 1.0) < 1e-6);
  CHECK(std::abs(r.x[1] - 1.0) < 1e-6);
}

TEST_CASE("non-finite values are never accepted") {
  // The minimum of the smooth part lies in the forbidden region x < 0.
  auto f = [](const std::vector<double>& x) { return x[0] < 0.0 ? NAN : std::pow(x[0] + 1.0, 2); };
  const auto r = nelder_mead(f, {2.0}, {1.0});
  CHECK(r.x[0] >= 0.0);
  CHECK(std::isfinite(r.value));
  CHECK(r.x[0] < 1e-6);
}

TEST_CASE("evaluation budget is respected") {
  NelderMeadOptions o;
  o.max_evaluations = 30;
  int calls = 0;
  auto f = [&](const std::vector<double>& x) {
    ++calls;
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  const auto r = nelder_mead(f, {-1.2, 1.0}, {1.0, 1.0}, o);
  CHECK_FALSE(r.converged);
  CHECK(r.evaluations == calls);
  CHECK(calls <= 30 + 3);
}
