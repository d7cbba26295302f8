#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qaction/fit.hpp"
#include "qaction/model.hpp"
#include "qaction/parallel.hpp"
#include "qaction/trajectory.hpp"

namespace qa {

struct FlowState {
  double beta = 0.0;
  ActionParams params;
  double log_norm = 0.0;
  double initial_point = 0.0;
  std::vector<double> final_points;
  // Exponents whose coefficients flow; others stay fixed.
  std::vector<int> ansatz{0, 2, -2};

  // Unknowns in the order (ln Z~, m~, v~_k for k in ascending ansatz).
  int unknowns() const { return 2 + static_cast<int>(ansatz.size()); }
  void validate() const;
};

enum class Degeneracy {
  // Minimum-norm least squares over the rank-deficient system.
  MinimumNorm,
  // d v~0 / d beta = -sum_k x_min^k d v~_k / d beta, which keeps V~_min
  // constant to first order (the asymptotic ground-energy constraint).
  PinnedEnergy,
};

enum class TimeDerivative { Envelope, FiniteDifference };

struct FlowOptions {
  ActionParams classical;  // mass and potential of the Schroedinger operator
  int points_per_unit = 500;
  // Fixed segment count for every trajectory; 0 picks points_per_unit * T.
  int segments = 0;
  Degeneracy degeneracy = Degeneracy::MinimumNorm;
  TimeDerivative time_derivative = TimeDerivative::Envelope;
  double condition_limit = 1e12;
  int max_halvings = 6;
  int stride = 1;
  Execution exec = Execution::Parallel;
};

struct FlowSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd r;
  std::vector<ActionSensitivities> rows;
};

struct FlowSolution {
  Eigen::VectorXd rate;  // d/d beta of the unknowns
  int rank = 0;
  int rank_deficiency = 0;
  double condition = 0.0;  // over the retained singular values
  double residual_norm = 0.0;
  // -d ln Z~/d beta + beta d v~0/d beta; unaffected by the degeneracy.
  double combination = 0.0;
};

// Per-final-point trajectory bundles reused as Newton seeds.
struct FlowWarmStart {
  std::vector<std::optional<TrajectoryBundle>> bundles;
};

TimeGrid flow_grid(const FlowState& state, const FlowOptions& options);

// Row j: [-1, dSigma/dm, dSigma/dv_k] . u = -dSigma/dbeta - (hbar^2/2m)[(dSigma/dx)^2 - d2Sigma/dx2] + V(x_j)
// with the classical m and V. Throws NumericalError naming the failing x_f.
FlowSystem assemble_system(const FlowState& state, const FlowOptions& options, FlowWarmStart* warm = nullptr);

FlowSolution solve_system(const FlowSystem& system, const FlowState& state, const FlowOptions& options);

struct FlowDiagnostics {
  double dbeta = 0.0;
  double residual_norm = 0.0;
  double condition = 0.0;
  int rank_deficiency = 0;
  double combination = 0.0;
};

// One classical Runge-Kutta step (four assemblies). Throws NumericalError
// when the step cannot be taken at this dbeta.
FlowState rk4_step(const FlowState& state, double dbeta, const FlowOptions& options, FlowWarmStart* warm = nullptr,
                   FlowDiagnostics* diag = nullptr);

// rk4_step with dbeta halved on rejection (conditioning, failed solves,
// non-positive mass). Returns the state actually reached.
FlowState step(const FlowState& state, double dbeta, const FlowOptions& options, FlowWarmStart* warm = nullptr,
               FlowDiagnostics* diag = nullptr);

struct FlowTrace {
  std::vector<FlowState> states;
  std::vector<FlowDiagnostics> diagnostics;  // diagnostics[i] describes the step into states[i]
};

FlowTrace run(const FlowState& init, double beta_end, double dbeta, const FlowOptions& options);

// Initial data from a global fit: the table must have one initial point,
// and the state inherits its final points, time and the fit's ansatz.
FlowState bootstrap_state(const AmplitudeTable& table, const ActionParams& init, const FitOptions& fit_options);

// Columns beta, m, v-6 ... v6, lnZ, residual_norm, condition, rank_flag.
std::string trace_csv(const FlowTrace& trace, const std::string& metadata = {});

}  // namespace qa
