#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "qaction/errors.hpp"

namespace qa::quad {

// Adaptive 15-point Gauss-Kronrod on [a, b].
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-13, unsigned max_depth = 25) {
  if (a == b) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, rel_tol,
                                                                       &err);
}

// Integral over [a, inf): the range is cut where |f| drops below 1e-16 of
// the largest value seen, scanning outward in steps of `scale`.
template <class F>
double integrate_to_infinity(F&& f, double a, double scale, double rel_tol = 1e-13) {
  double peak = std::abs(f(a));
  double x = a;
  for (int i = 0; i < 100000; ++i) {
    x += scale;
    const double v = std::abs(f(x));
    peak = std::max(peak, v);
    if (peak > 0.0 && v < 1e-16 * peak) break;
  }
  // Split into unit-scale panels so the adaptive rule sees the peak.
  double total = 0.0;
  for (double lo = a; lo < x; lo += scale) total += integrate(f, lo, std::min(lo + scale, x), rel_tol);
  return total;
}

// Root of f on a bracketing interval [a, b].
template <class F>
double find_root(F&& f, double a, double b, double x_tol = 1e-14) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw NumericalError("root not bracketed");
  std::uintmax_t max_iter = 200;
  auto tol = [x_tol](double lo, double hi) { return std::abs(hi - lo) <= x_tol * std::max(1.0, std::abs(lo)); };
  auto [lo, hi] = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, max_iter);
  return 0.5 * (lo + hi);
}

}  // namespace qa::quad
