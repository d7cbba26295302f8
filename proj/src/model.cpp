#include "qaction/model.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace qa {

namespace {

double ipow(double x, int k) {
  if (k == 0) return 1.0;
  double base = k > 0 ? x : 1.0 / x;
  int n = k > 0 ? k : -k;
  double result = 1.0;
  while (n) {
    if (n & 1) result *= base;
    base *= base;
    n >>= 1;
  }
  return result;
}

void check_argument(const PotentialSpec& spec, double x) {
  if (spec.has_negative_powers() && !(x > 0.0))
    throw InputError("potential with negative powers evaluated at x = " + std::to_string(x) +
                     " (half-line domain requires x > 0)");
  if (!std::isfinite(x)) throw InputError("potential evaluated at non-finite x");
}

}  // namespace

PotentialSpec::PotentialSpec(std::initializer_list<std::pair<const int, double>> terms) {
  for (const auto& [k, v] : terms) set(k, v);
}

void PotentialSpec::set(int k, double value) {
  if (!allowed_exponent(k))
    throw InputError("exponent " + std::to_string(k) + " outside the even range [-6, 6]");
  if (!std::isfinite(value)) throw InputError("non-finite potential coefficient");
  if (value == 0.0)
    terms_.erase(k);
  else
    terms_[k] = value;
}

double PotentialSpec::coefficient(int k) const {
  auto it = terms_.find(k);
  return it == terms_.end() ? 0.0 : it->second;
}

bool PotentialSpec::has_negative_powers() const {
  return !terms_.empty() && terms_.begin()->first < 0;
}

double PotentialSpec::value(double x) const {
  check_argument(*this, x);
  double v = 0.0;
  for (const auto& [k, c] : terms_) v += c * ipow(x, k);
  return v;
}

double PotentialSpec::derivative(double x) const {
  check_argument(*this, x);
  double d = 0.0;
  for (const auto& [k, c] : terms_)
    if (k != 0) d += k * c * ipow(x, k - 1);
  return d;
}

double PotentialSpec::second_derivative(double x) const {
  check_argument(*this, x);
  double d = 0.0;
  for (const auto& [k, c] : terms_)
    if (k != 0 && k != 1) d += k * (k - 1) * c * ipow(x, k - 2);
  return d;
}

void ActionParams::validate() const {
  if (!(mass > 0.0) || !std::isfinite(mass)) throw InputError("mass must be positive");
  if (!(hbar > 0.0) || !std::isfinite(hbar)) throw InputError("hbar must be positive");
  if (potential.has_negative_powers() && domain != Domain::HalfLine)
    throw InputError("negative powers in the potential require the half-line domain");
}

ActionParams make_action(double mass, PotentialSpec potential, double hbar) {
  ActionParams p;
  p.mass = mass;
  p.hbar = hbar;
  p.domain = potential.has_negative_powers() ? Domain::HalfLine : Domain::FullLine;
  p.potential = std::move(potential);
  p.validate();
  return p;
}

ActionParams inverse_square_model(double mass, double omega, double g, double hbar) {
  PotentialSpec spec;
  spec.set(2, 0.5 * mass * omega * omega);
  spec.set(-2, g);
  ActionParams p = make_action(mass, spec, hbar);
  p.domain = Domain::HalfLine;
  return p;
}

double potential_value(const ActionParams& params, double x) {
  if (params.domain == Domain::HalfLine && !(x > 0.0))
    throw InputError("x must be positive on the half-line");
  return params.potential.value(x);
}

double potential_derivative(const ActionParams& params, double x) {
  if (params.domain == Domain::HalfLine && !(x > 0.0))
    throw InputError("x must be positive on the half-line");
  return params.potential.derivative(x);
}

PotentialMinimum potential_minimum(const ActionParams& params) {
  const PotentialSpec& spec = params.potential;
  const double v2 = spec.coefficient(2);
  const double vm2 = spec.coefficient(-2);

  bool simple_family = true;
  for (const auto& [k, c] : spec.terms())
    if (k != 2 && k != -2 && k != 0) simple_family = false;

  if (simple_family && v2 > 0.0 && vm2 > 0.0) {
    const double x = std::pow(vm2 / v2, 0.25);
    return {x, spec.coefficient(0) + 2.0 * std::sqrt(v2 * vm2)};
  }
  if (simple_family && v2 > 0.0 && vm2 == 0.0 && params.domain == Domain::FullLine)
    return {0.0, spec.coefficient(0)};

  // General case: V is even in x, so search x > 0 for a sign change of V'
  // from negative to positive on a logarithmic scan, then bisect.
  bool found = false;
  PotentialMinimum best{0.0, std::numeric_limits<double>::infinity()};
  if (params.domain == Domain::FullLine && spec.second_derivative(0.0) > 0.0)
    best = {0.0, spec.value(0.0)}, found = true;

  const int n_scan = 2000;
  const double lo = 1e-4, hi = 1e4;
  double x_prev = lo, d_prev = spec.derivative(lo);
  for (int i = 1; i <= n_scan; ++i) {
    const double x = lo * std::pow(hi / lo, static_cast<double>(i) / n_scan);
    const double d = spec.derivative(x);
    if (d_prev < 0.0 && d >= 0.0) {
      double a = x_prev, b = x;
      for (int it = 0; it < 200 && b - a > 4 * std::numeric_limits<double>::epsilon() * b; ++it) {
        const double m = 0.5 * (a + b);
        (spec.derivative(m) < 0.0 ? a : b) = m;
      }
      const double xm = 0.5 * (a + b);
      const double vm = spec.value(xm);
      if (vm < best.v_min) best = {xm, vm};
      found = true;
    }
    x_prev = x;
    d_prev = d;
  }
  if (!found) throw NumericalError("potential has no interior minimum on its domain");
  return best;
}

void to_json(nlohmann::json& j, const PotentialSpec& spec) {
  j = nlohmann::json::object();
  for (const auto& [k, c] : spec.terms()) j[std::to_string(k)] = c;
}

void from_json(const nlohmann::json& j, PotentialSpec& spec) {
  spec = PotentialSpec{};
  if (!j.is_object()) throw InputError("coefficients must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(key, &used);
    } catch (const std::exception&) {
      throw InputError("bad exponent key '" + key + "'");
    }
    if (used != key.size()) throw InputError("bad exponent key '" + key + "'");
    if (!value.is_number()) throw InputError("coefficient for exponent " + key + " is not a number");
    spec.set(k, value.get<double>());
  }
}

void to_json(nlohmann::json& j, const ActionParams& params) {
  j = nlohmann::json{{"mass", params.mass},
                     {"hbar", params.hbar},
                     {"domain", params.domain == Domain::HalfLine ? "half_line" : "full_line"},
                     {"coefficients", params.potential}};
}

void from_json(const nlohmann::json& j, ActionParams& params) {
  if (!j.is_object()) throw InputError("action parameters must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (key != "mass" && key != "hbar" && key != "domain" && key != "coefficients")
      throw InputError("unknown key '" + key + "' in model");
  params = ActionParams{};
  params.mass = j.value("mass", 1.0);
  params.hbar = j.value("hbar", 1.0);
  params.potential = j.at("coefficients").get<PotentialSpec>();
  if (j.contains("domain")) {
    const auto d = j.at("domain").get<std::string>();
    if (d == "half_line")
      params.domain = Domain::HalfLine;
    else if (d == "full_line")
      params.domain = Domain::FullLine;
    else
      throw InputError("domain must be 'half_line' or 'full_line'");
  } else {
    params.domain = params.potential.has_negative_powers() ? Domain::HalfLine : Domain::FullLine;
  }
  params.validate();
}

}  // namespace qa
