#include "qaction/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qaction/errors.hpp"

namespace qa {

double ln_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw InputError("ln_gamma requires x > 0");
  return std::lgamma(x);
}

namespace {

void check_bessel_args(double nu, double z) {
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw InputError("bessel_i requires nu >= 0");
  if (!(z >= 0.0) || !std::isfinite(z)) throw InputError("bessel_i requires z >= 0");
}

}  // namespace

double bessel_i_crossover(double nu) { return std::max(30.0, 2.0 * nu * nu); }

BesselResult bessel_i_series(double nu, double z) {
  check_bessel_args(nu, z);
  if (z == 0.0) {
    if (nu == 0.0) return {1.0, 0.0};
    return {0.0, -std::numeric_limits<double>::infinity()};
  }
  // I = (z/2)^nu / Gamma(nu+1) * sum_k t_k,  t_k = t_{k-1} (z^2/4) / (k (k+nu)).
  // All terms are positive; the running sum is rescaled to stay finite.
  const double q = 0.25 * z * z;
  double term = 1.0, sum = 1.0, log_shift = 0.0;
  for (int k = 1; k < 100000; ++k) {
    term *= q / (k * (k + nu));
    sum += term;
    if (sum > 1e280) {
      sum *= 1e-280;
      term *= 1e-280;
      log_shift += 280.0 * std::numbers::ln10;
    }
    if (term < 1e-17 * sum && k > 0.5 * z) break;
  }
  const double log_value =
      nu * std::log(0.5 * z) - std::lgamma(nu + 1.0) + std::log(sum) + log_shift;
  return {std::exp(log_value - z), log_value};
}

BesselResult bessel_i_asymptotic(double nu, double z) {
  check_bessel_args(nu, z);
  if (z == 0.0) throw InputError("asymptotic Bessel branch requires z > 0");
  // I ~ e^z / sqrt(2 pi z) * sum_k (-1)^k a_k(nu) / z^k; stop at the smallest term.
  const double mu = 4.0 * nu * nu;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 1000; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (8.0 * k * z);
    if (std::abs(next) >= std::abs(term) && k > 1) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  const double scaled = sum / std::sqrt(2.0 * std::numbers::pi * z);
  return {scaled, std::log(scaled) + z};
}

BesselResult bessel_i(double nu, double z) {
  check_bessel_args(nu, z);
  if (z > bessel_i_crossover(nu)) return bessel_i_asymptotic(nu, z);
  return bessel_i_series(nu, z);
}

}  // namespace qa
