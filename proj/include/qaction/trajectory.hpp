#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qaction/model.hpp"

namespace qa {

// Uniform grid on [0, duration]. The point count is segments + 1; with the
// proportional policy segments = round(points_per_unit * duration).
class TimeGrid {
 public:
  static TimeGrid proportional(double duration, int points_per_unit);
  static TimeGrid fixed(double duration, int segments);

  double duration() const { return duration_; }
  int segments() const { return segments_; }
  int points() const { return segments_ + 1; }
  double step() const { return duration_ / segments_; }
  double time(int i) const { return duration_ * i / segments_; }

  bool operator==(const TimeGrid&) const = default;

 private:
  TimeGrid(double duration, int segments);
  double duration_;
  int segments_;
};

class Trajectory {
 public:
  Trajectory(TimeGrid grid, std::vector<double> positions);

  const TimeGrid& grid() const { return grid_; }
  std::span<const double> positions() const { return positions_; }
  double start() const { return positions_.front(); }
  double end() const { return positions_.back(); }
  double operator[](int i) const { return positions_[i]; }

  // Linear resampling onto another grid (same relative time s = t / T).
  std::vector<double> resampled(const TimeGrid& grid) const;

 private:
  TimeGrid grid_;
  std::vector<double> positions_;
};

struct BvpOptions {
  int max_iterations = 200;
  // Converged when max_i |x_{i+1} - 2 x_i + x_{i-1} - dt^2 V'(x_i)/m| is below
  // tolerance * max(1, max_i |x_i|).
  double tolerance = 1e-12;
  bool throw_on_failure = true;
};

struct BvpResult {
  Trajectory trajectory;
  int iterations;
  double residual;
  bool converged;
};

// Discrete Euclidean equation of motion
//   m (x_{i+1} - 2 x_i + x_{i-1}) / dt^2 = V'(x_i),  x_0 = a, x_N = b,
// solved by damped Newton on the tridiagonal system (the Newton matrix is the
// Hessian of the discrete action). The guess is resampled onto `grid`.
BvpResult solve_bvp_detailed(const ActionParams& q, double a, double b, const TimeGrid& grid,
                             const Trajectory* guess = nullptr, const BvpOptions& options = {});

Trajectory solve_bvp(const ActionParams& q, double a, double b, const TimeGrid& grid,
                     const Trajectory* guess = nullptr, const BvpOptions& options = {});

// Trapezoidal discrete action divided by hbar:
//   sum_i [ m (x_{i+1} - x_i)^2 / (2 dt) + dt (V_i + V_{i+1}) / 2 ] / hbar.
// The discrete equation of motion is exactly its stationarity condition.
double action_value(const ActionParams& q, const Trajectory& traj);

// First and second partial derivatives of the dimensionless action.
struct ActionSensitivities {
  static constexpr int kCoefficients = 7;  // exponents -6, -4, ..., 6

  double value = 0.0;
  double d_mass = 0.0;
  std::array<double, kCoefficients> d_coeff{};
  double d_time = 0.0;  // d Sigma / d beta at fixed endpoints and parameters
  double d_x = 0.0;     // d Sigma / d x at the final endpoint
  double d_xx = 0.0;

  static int slot(int k) { return (k + 6) / 2; }
  double coeff(int k) const { return d_coeff[slot(k)]; }
};

// Trajectory at x_f plus the two neighbours at x_f -/+ h used for d_xx.
struct TrajectoryBundle {
  Trajectory centre;
  Trajectory lower;
  Trajectory upper;
  double h;
};

// Neighbour step h = 1e-3 * max(1, |b|).
double neighbour_step(double b);

TrajectoryBundle solve_bundle(const ActionParams& q, double a, double b, const TimeGrid& grid,
                              const TrajectoryBundle* guess = nullptr,
                              const BvpOptions& options = {});

// All derivatives are of the discrete action, so by stationarity they equal
// the derivatives of the optimal value: d_mass and d_coeff are the explicit
// partials, d_time and d_x the envelope derivatives w.r.t. duration and the
// final endpoint, and d_xx a central difference of d_x over the neighbours.
ActionSensitivities sensitivities(const ActionParams& q, const Trajectory& traj,
                                  const Trajectory& lower, const Trajectory& upper);
ActionSensitivities sensitivities(const ActionParams& q, const TrajectoryBundle& bundle);

// Endpoint derivative d Sigma / d x_N of the discrete action.
double endpoint_derivative(const ActionParams& q, const Trajectory& traj);

// Spread (max - min over interior nodes) of the Euclidean energy
//   (m/2) v^2 - V(x) - dt^2 (V'' v^2 / 12 + V'^2 / (24 m)),
// v the centred velocity. The dt^2 correction makes the quantity conserved
// by the discrete equation of motion up to O(dt^4).
double conserved_energy_drift(const ActionParams& q, const Trajectory& traj);

// Two-column CSV (t, x).
std::string trajectory_csv(const Trajectory& traj);

}  // namespace qa
