#pragma once

#include "qaction/model.hpp"

namespace qa {

// Exact results for the inverse-square model
//   V(x) = v2 x^2 + v-2 x^-2,  v2 = m w^2 / 2,  g = v-2 >= 0,  x > 0.
// Every function below rejects models outside this family.

struct InverseSquare {
  double mass;
  double hbar;
  double omega;
  double g;
};

// Extracts (m, hbar, w, g); throws InputError for other potentials.
InverseSquare inverse_square_parameters(const ActionParams& model);

// Bessel order gamma = 1/2 sqrt(1 + 8 m g / hbar^2).
double gamma_index(const ActionParams& model);

// ln G_E(b, T; a, 0), assembled in the log domain so that the short-time
// regime (large Bessel argument) never overflows.
double euclidean_log_amplitude(const ActionParams& model, double a, double b, double T);
// d/dT of the above, using I_g'(z) = I_{g+1}(z) + (g/z) I_g(z).
double euclidean_log_amplitude_time_derivative(const ActionParams& model, double a, double b, double T);

struct GroundState {
  double energy;         // hbar w (1 + gamma)
  double gamma_index;
  double normalisation;  // Z0
  double mass_omega;     // m w / hbar, the Gaussian rate of psi^2

  double wavefunction(double x) const;
  double log_wavefunction(double x) const;
};

GroundState ground_state(const ActionParams& model);

struct DynamicalScales {
  double t_scale;       // 1 / E_gr
  double length_scale;  // radius holding 95% of |psi_gr|^2
};

DynamicalScales dynamical_scales(const ActionParams& model, double probability = 0.95);

// T -> infinity values of the quantum action: only the products m~ v~2 and
// m~ v~-2 are fixed, together with E_gr = V~_min.
struct AsymptoticProducts {
  double mass_v2;
  double mass_vm2;
  double energy;
};

AsymptoticProducts asymptotic_quantum_params(const ActionParams& model);

// Quantum action with the asymptotic products for a chosen m~, and v~0 set so
// that V~_min = E_gr.
ActionParams asymptotic_quantum_action(const ActionParams& model, double mass_tilde = 1.0);

// LHS - RHS of the T -> infinity transformation law relating (m, V, E_gr) to
// (m~, V~). The energy overload allows models without a closed form.
double transformation_residual(const ActionParams& model, const ActionParams& quantum, double x);
double transformation_residual(const ActionParams& model, const ActionParams& quantum, double x,
                               double energy);

// Unnormalised ground state rebuilt from a quantum action:
//   exp(-|int_{x~min}^{x} sqrt(2 m~ (V~ - V~min))| / hbar).
double reconstruct_ground_state(const ActionParams& quantum, double x);

// The same, normalised to unit probability on the domain.
class ReconstructedGroundState {
 public:
  explicit ReconstructedGroundState(const ActionParams& quantum);
  double operator()(double x) const { return reconstruct_ground_state(quantum_, x) / norm_; }
  double norm() const { return norm_; }

 private:
  ActionParams quantum_;
  double norm_;
};

}  // namespace qa
