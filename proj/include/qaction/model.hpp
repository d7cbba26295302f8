#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qaction/errors.hpp"

namespace qa {

enum class Domain { HalfLine, FullLine };

// Sparse polynomial potential V(x) = sum_k v_k x^k over even k in [-6, 6].
class PotentialSpec {
 public:
  static constexpr int kMinExponent = -6;
  static constexpr int kMaxExponent = 6;

  PotentialSpec() = default;
  PotentialSpec(std::initializer_list<std::pair<const int, double>> terms);

  static bool allowed_exponent(int k) {
    return k >= kMinExponent && k <= kMaxExponent && k % 2 == 0;
  }

  // Sets v_k; a zero value removes the term.
  void set(int k, double value);
  double coefficient(int k) const;
  const std::map<int, double>& terms() const { return terms_; }

  bool has_negative_powers() const;
  bool empty() const { return terms_.empty(); }

  double value(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;

  friend bool operator==(const PotentialSpec&, const PotentialSpec&) = default;

 private:
  std::map<int, double> terms_;
};

struct ActionParams {
  double mass = 1.0;
  double hbar = 1.0;
  PotentialSpec potential;
  Domain domain = Domain::FullLine;

  // Throws InputError when mass/hbar are non-positive or a singular term sits
  // on the full line.
  void validate() const;

  bool in_domain(double x) const {
    return domain == Domain::FullLine ? std::isfinite(x) : x > 0.0;
  }

  friend bool operator==(const ActionParams&, const ActionParams&) = default;
};

// Picks HalfLine automatically when negative exponents are present.
ActionParams make_action(double mass, PotentialSpec potential, double hbar = 1.0);

// The inverse-square model V = 1/2 m w^2 x^2 + g x^-2 on the half-line.
ActionParams inverse_square_model(double mass, double omega, double g, double hbar = 1.0);

double potential_value(const ActionParams& params, double x);
double potential_derivative(const ActionParams& params, double x);

struct PotentialMinimum {
  double x_min;
  double v_min;
};

// Interior minimum on the domain. Closed form for the {v2, v-2, v0} family,
// otherwise a bracketing search on V'. Throws NumericalError if none exists.
PotentialMinimum potential_minimum(const ActionParams& params);

void to_json(nlohmann::json& j, const PotentialSpec& spec);
void from_json(const nlohmann::json& j, PotentialSpec& spec);
void to_json(nlohmann::json& j, const ActionParams& params);
void from_json(const nlohmann::json& j, ActionParams& params);

}  // namespace qa
