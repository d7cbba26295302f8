#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qaction/model.hpp"

namespace qa {

// Uniform nodes x_i = x_min + i * spacing, i < n_points, with Dirichlet
// zeros one spacing beyond either end.
struct SpatialGrid {
  double x_min;
  double x_max;
  int n_points;
  double spacing;

  static SpatialGrid uniform(double x_min, double x_max, double spacing);
  // [spacing, length] on the half-line (wall at x = 0) or [-length, length].
  static SpatialGrid default_for(const ActionParams& model, double spacing = 5e-3,
                                 double length = 12.0);

  double node(int i) const { return x_min + i * spacing; }
  void validate(const ActionParams& model) const;
};

// Symmetric tridiagonal H = -(hbar^2 / 2m) D2 + V on the grid.
struct TridiagonalOperator {
  SpatialGrid grid;
  double hbar;
  std::vector<double> diagonal;
  std::vector<double> off_diagonal;  // n_points - 1 entries
};

TridiagonalOperator discretize(const ActionParams& model, const SpatialGrid& grid);

// Lowest eigenpairs; eigenvectors normalised so sum_i psi_n(x_i)^2 dx = 1.
struct SpectralDecomposition {
  SpatialGrid grid;
  double hbar;
  std::vector<double> energies;
  std::vector<double> vectors;  // column-major, n_points x n_states

  int n_states() const { return static_cast<int>(energies.size()); }
  double psi(int n, int i) const { return vectors[static_cast<std::size_t>(n) * grid.n_points + i]; }
  // Local cubic interpolation of psi_n at an off-node position.
  double psi_at(int n, double x) const;
};

SpectralDecomposition spectrum(const TridiagonalOperator& op, int n_states);

// Keeps every state with E_n - E_0 <= hbar * 28 / t_min (tail <= 1e-12 at
// t_min), at least `min_states`.
SpectralDecomposition spectrum_for_time(const TridiagonalOperator& op, double t_min,
                                        int min_states = 1);

// Euclidean kernel sum_n psi_n(b) psi_n(a) exp(-E_n T / hbar). Throws
// NumericalError when the retained states cannot resolve T.
double amplitude(const SpectralDecomposition& decomp, double a, double b, double T);
// d/dT of the kernel.
double amplitude_time_derivative(const SpectralDecomposition& decomp, double a, double b, double T);

// Smallest T the decomposition resolves to a 1e-12 tail.
double min_resolved_time(const SpectralDecomposition& decomp);

// Grid-spectral oracle for a model. With `extrapolate`, two decompositions
// at spacing h and h/2 are combined as (4 G_{h/2} - G_h) / 3, removing the
// O(h^2) error of the 3-point Laplacian.
class SpectralOracle {
 public:
  struct Options {
    double spacing = 5e-3;
    double length = 12.0;
    double t_min = 0.2;
    bool extrapolate = true;
  };

  SpectralOracle(const ActionParams& model, const Options& options);

  double amplitude(double a, double b, double T) const;
  double log_amplitude(double a, double b, double T) const;
  // d ln G / dT.
  double log_amplitude_time_derivative(double a, double b, double T) const;
  double ground_energy() const;

  const SpectralDecomposition& fine() const { return fine_; }
  const std::optional<SpectralDecomposition>& coarse() const { return coarse_; }

 private:
  SpectralDecomposition fine_;
  std::optional<SpectralDecomposition> coarse_;
};

// CSV "n,E_n".
std::string spectrum_csv(const SpectralDecomposition& decomp);

}  // namespace qa
