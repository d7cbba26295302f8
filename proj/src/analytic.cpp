#include "qaction/analytic.hpp"

#include <cmath>
#include <numbers>

#include "qaction/quadrature.hpp"
#include "qaction/specfun.hpp"

namespace qa {

namespace {

// ln sinh(u) for u > 0 without overflow.
double log_sinh(double u) {
  if (u > 20.0) return u + std::log1p(-std::exp(-2.0 * u)) - std::numbers::ln2;
  return std::log(std::sinh(u));
}

bool is_two_term_family(const PotentialSpec& spec) {
  for (const auto& [k, c] : spec.terms())
    if (k != 2 && k != -2 && k != 0) return false;
  return true;
}

}  // namespace

InverseSquare inverse_square_parameters(const ActionParams& model) {
  model.validate();
  for (const auto& [k, c] : model.potential.terms())
    if (k != 2 && k != -2)
      throw InputError("model is not of inverse-square form (unexpected x^" + std::to_string(k) +
                       " term)");
  const double v2 = model.potential.coefficient(2);
  const double g = model.potential.coefficient(-2);
  if (!(v2 > 0.0)) throw InputError("inverse-square model needs v2 > 0");
  if (g < 0.0) throw InputError("inverse-square model needs g >= 0");
  if (model.domain != Domain::HalfLine) throw InputError("inverse-square model lives on the half-line");
  return {model.mass, model.hbar, std::sqrt(2.0 * v2 / model.mass), g};
}

double gamma_index(const ActionParams& model) {
  const auto p = inverse_square_parameters(model);
  return 0.5 * std::sqrt(1.0 + 8.0 * p.mass * p.g / (p.hbar * p.hbar));
}

double euclidean_log_amplitude(const ActionParams& model, double a, double b, double T) {
  if (!(a > 0.0) || !(b > 0.0)) throw InputError("amplitude endpoints must be positive");
  if (!(T > 0.0) || !std::isfinite(T)) throw InputError("transition time must be positive");
  const auto p = inverse_square_parameters(model);
  const double gamma = 0.5 * std::sqrt(1.0 + 8.0 * p.mass * p.g / (p.hbar * p.hbar));
  const double rate = p.mass * p.omega / p.hbar;
  const double u = p.omega * T;
  const double ls = log_sinh(u);
  const double z = rate * a * b * std::exp(-ls);

  // -(rate/2)(a^2+b^2) coth u + z, rewritten without cancellation.
  const double d = a - b;
  const double gauss = -0.5 * rate * (d * d / std::tanh(u) + 2.0 * a * b * std::tanh(0.5 * u));
  const BesselResult bessel = bessel_i(gamma, z);
  return std::log(rate) + 0.5 * std::log(a * b) - ls + gauss + std::log(bessel.scaled_value);
}

double euclidean_log_amplitude_time_derivative(const ActionParams& model, double a, double b, double T) {
  if (!(a > 0.0) || !(b > 0.0)) throw InputError("amplitude endpoints must be positive");
  if (!(T > 0.0) || !std::isfinite(T)) throw InputError("transition time must be positive");
  const auto p = inverse_square_parameters(model);
  const double gamma = 0.5 * std::sqrt(1.0 + 8.0 * p.mass * p.g / (p.hbar * p.hbar));
  const double rate = p.mass * p.omega / p.hbar;
  const double u = p.omega * T;
  const double s = std::sinh(u), coth = 1.0 / std::tanh(u);
  const double z = rate * a * b / s;
  const double ratio = z > 0.0 ? bessel_i(gamma + 1.0, z).scaled_value / bessel_i(gamma, z).scaled_value : 0.0;
  // Gaussian and Bessel pieces combined so the leading 1/T^2 terms cancel analytically.
  const double d = a - b;
  const double gauss = 0.5 * rate * (d * d + 2.0 * a * b * (1.0 - std::cosh(u) * ratio)) / (s * s);
  return p.omega * (-coth - gamma * coth + gauss);
}

double GroundState::log_wavefunction(double x) const {
  if (!(x > 0.0)) throw InputError("ground state evaluated at x <= 0");
  return 0.5 * std::log(normalisation) + (0.5 + gamma_index) * std::log(x) -
         0.5 * mass_omega * x * x;
}

double GroundState::wavefunction(double x) const { return std::exp(log_wavefunction(x)); }

GroundState ground_state(const ActionParams& model) {
  const auto p = inverse_square_parameters(model);
  const double gamma = gamma_index(model);
  const double rate = p.mass * p.omega / p.hbar;
  const double log_z0 = std::log(2.0 * rate) - std::lgamma(gamma + 1.0) + gamma * std::log(rate);
  return {p.hbar * p.omega * (1.0 + gamma), gamma, std::exp(log_z0), rate};
}

DynamicalScales dynamical_scales(const ActionParams& model, double probability) {
  if (!(probability > 0.0 && probability < 1.0)) throw InputError("probability must lie in (0, 1)");
  const GroundState gs = ground_state(model);
  auto density = [&](double x) { return x > 0.0 ? std::exp(2.0 * gs.log_wavefunction(x)) : 0.0; };
  const double width = 1.0 / std::sqrt(gs.mass_omega);
  auto cumulative = [&](double L) { return quad::integrate(density, 0.0, L, 1e-12) - probability; };
  double hi = width;
  while (cumulative(hi) < 0.0) hi *= 2.0;
  const double L = quad::find_root(cumulative, 0.0, hi, 1e-12);
  return {1.0 / gs.energy, L};
}

AsymptoticProducts asymptotic_quantum_params(const ActionParams& model) {
  const auto p = inverse_square_parameters(model);
  const double gamma = gamma_index(model);
  const double half_gamma = 0.5 + gamma;
  return {0.5 * p.mass * p.mass * p.omega * p.omega, 0.5 * p.hbar * p.hbar * half_gamma * half_gamma,
          p.hbar * p.omega * (1.0 + gamma)};
}

ActionParams asymptotic_quantum_action(const ActionParams& model, double mass_tilde) {
  if (!(mass_tilde > 0.0)) throw InputError("quantum mass must be positive");
  const auto prod = asymptotic_quantum_params(model);
  PotentialSpec spec;
  const double v2 = prod.mass_v2 / mass_tilde;
  const double vm2 = prod.mass_vm2 / mass_tilde;
  spec.set(2, v2);
  spec.set(-2, vm2);
  spec.set(0, prod.energy - 2.0 * std::sqrt(v2 * vm2));
  ActionParams q = make_action(mass_tilde, spec, model.hbar);
  return q;
}

double transformation_residual(const ActionParams& model, const ActionParams& quantum, double x) {
  return transformation_residual(model, quantum, x, ground_state(model).energy);
}

double transformation_residual(const ActionParams& model, const ActionParams& quantum, double x,
                               double energy) {
  if (!quantum.in_domain(x) || !model.in_domain(x)) throw InputError("x outside the domain");
  const PotentialMinimum qmin = potential_minimum(quantum);
  const double w = 2.0 * quantum.mass * (quantum.potential.value(x) - qmin.v_min);
  if (x == qmin.x_min || !(w > 0.0))
    throw InputError("transformation law is singular at the quantum potential minimum");
  const double dw = 2.0 * quantum.mass * quantum.potential.derivative(x);
  const double sign = x > qmin.x_min ? 1.0 : -1.0;
  const double lhs = 2.0 * model.mass * (model.potential.value(x) - energy);
  const double rhs = w - 0.5 * quantum.hbar * dw / std::sqrt(w) * sign;
  return lhs - rhs;
}

double reconstruct_ground_state(const ActionParams& quantum, double x) {
  if (!quantum.in_domain(x)) throw InputError("x outside the domain");
  const PotentialMinimum qmin = potential_minimum(quantum);
  const PotentialSpec& spec = quantum.potential;
  const double m = quantum.mass, hbar = quantum.hbar;

  if (is_two_term_family(spec) && spec.coefficient(2) > 0.0) {
    const double alpha = std::sqrt(2.0 * m * spec.coefficient(2)) / hbar;
    const double vm2 = spec.coefficient(-2);
    if (vm2 > 0.0) {
      const double beta = std::sqrt(2.0 * m * vm2) / hbar;
      const double xm = qmin.x_min;
      return std::exp(beta * std::log(x / xm) - 0.5 * alpha * (x * x - xm * xm));
    }
    if (vm2 == 0.0 && quantum.domain == Domain::FullLine) return std::exp(-0.5 * alpha * x * x);
  }

  auto integrand = [&](double y) {
    const double w = 2.0 * m * (spec.value(y) - qmin.v_min);
    return w > 0.0 ? std::sqrt(w) : 0.0;
  };
  const double lo = std::min(x, qmin.x_min), hi = std::max(x, qmin.x_min);
  return std::exp(-quad::integrate(integrand, lo, hi, 1e-13) / hbar);
}

ReconstructedGroundState::ReconstructedGroundState(const ActionParams& quantum)
    : quantum_(quantum), norm_(1.0) {
  const PotentialMinimum qmin = potential_minimum(quantum_);
  auto density = [&](double y) {
    if (!quantum_.in_domain(y)) return 0.0;
    const double psi = reconstruct_ground_state(quantum_, y);
    return psi * psi;
  };
  // Integrate outward from the minimum on each side.
  const double scale = 0.25 * std::max(1.0, std::abs(qmin.x_min));
  double total = quad::integrate_to_infinity(density, qmin.x_min, scale);
  if (quantum_.domain == Domain::HalfLine) {
    total += quad::integrate(density, 0.0, qmin.x_min, 1e-13);
  } else {
    total += quad::integrate_to_infinity([&](double y) { return density(2.0 * qmin.x_min - y); },
                                         qmin.x_min, scale);
  }
  norm_ = std::sqrt(total);
}

}  // namespace qa
