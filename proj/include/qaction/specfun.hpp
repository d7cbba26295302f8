#pragma once

namespace qa {

// ln Gamma(x) for x > 0.
double ln_gamma(double x);

// Modified Bessel function of the first kind I_nu(z) for real nu >= 0 and
// z >= 0, returned in overflow-safe form.
struct BesselResult {
  double scaled_value;  // exp(-z) * I_nu(z)
  double log_value;     // ln I_nu(z); -inf when I_nu(z) == 0
};

BesselResult bessel_i(double nu, double z);

// Branch selection, exposed so tests can probe both sides of the seam.
double bessel_i_crossover(double nu);
BesselResult bessel_i_series(double nu, double z);
BesselResult bessel_i_asymptotic(double nu, double z);

}  // namespace qa
