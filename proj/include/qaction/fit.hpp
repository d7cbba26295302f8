#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qaction/model.hpp"
#include "qaction/optimize.hpp"
#include "qaction/oracle.hpp"
#include "qaction/parallel.hpp"
#include "qaction/trajectory.hpp"

namespace qa {

struct BoundarySet {
  std::vector<double> initial_points;
  std::vector<double> final_points;

  // n equidistant points on [lo, hi] for each side (a single point sits at lo).
  static BoundarySet uniform(double in_lo, double in_hi, int n_in, double fi_lo, double fi_hi, int n_fi);
  void validate(const ActionParams& model) const;
  int pairs() const { return static_cast<int>(initial_points.size() * final_points.size()); }
};

enum class AmplitudeSource { Analytic, Oracle };

// ln G(x_fi, T; x_in, 0) and d ln G / dT, stored row-major with the initial
// point as the row: index = s * n_final + r.
struct AmplitudeTable {
  double T = 0.0;
  BoundarySet bounds;
  AmplitudeSource source = AmplitudeSource::Analytic;
  std::vector<double> log_values;
  std::vector<double> log_time_derivatives;

  int n_initial() const { return static_cast<int>(bounds.initial_points.size()); }
  int n_final() const { return static_cast<int>(bounds.final_points.size()); }
  double log_value(int s, int r) const { return log_values[s * n_final() + r]; }
};

// Oracle tables need `oracle` built for the same model with t_min <= T.
AmplitudeTable build_table(const ActionParams& model, const BoundarySet& bounds, double T,
                           AmplitudeSource source, const SpectralOracle* oracle = nullptr,
                           Execution exec = Execution::Parallel);

struct FitOptions {
  // Exponents of the fitted potential. v~0 is degenerate with ln Z~ at fixed
  // T and is set afterwards from the time derivative of the table.
  std::vector<int> ansatz{0, 2, -2};
  int points_per_unit = 500;
  NelderMeadOptions optimiser{};
  BvpOptions bvp{200, 1e-12, false};
  Execution exec = Execution::Parallel;
};

struct FitResult {
  double T = 0.0;
  ActionParams params;
  double log_norm = 0.0;
  double relative_error = 0.0;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  std::string message;
};

// Previous trajectories per boundary pair, reused as Newton seeds.
struct FitWarmStart {
  std::vector<std::optional<Trajectory>> paths;
};

// Log-domain least squares sum (ln G - ln Z~ + Sigma~)^2 with ln Z~ profiled,
// minimised by Nelder-Mead over (m~, v~_k for k != 0) scaled by `init`.
FitResult fit_at_time(const AmplitudeTable& table, const ActionParams& init, const FitOptions& options = {},
                      FitWarmStart* warm = nullptr);

// Objective and residual vector at given parameters (v~0 ignored). Returns
// +inf when a boundary value solve fails.
struct FitEvaluation {
  double objective;
  double log_norm;
  std::vector<double> actions;
};
FitEvaluation evaluate_fit(const AmplitudeTable& table, const ActionParams& params, const FitOptions& options,
                           FitWarmStart* warm = nullptr);

// Sum |G - Z~ e^{-Sigma~}| / sum |G| with the complete parameters.
double relative_fit_error(const AmplitudeTable& table, const ActionParams& params, double log_norm,
                          const FitOptions& options);

// Heuristic one-sigma estimates from the Gauss-Newton Hessian at the optimum,
// keyed "mass", "v<k>". Directions the data cannot fix come out infinite.
std::map<std::string, double> parameter_uncertainty(const FitResult& result, const AmplitudeTable& table,
                                                    const FitOptions& options = {});

struct SweepOptions {
  FitOptions fit;
  AmplitudeSource source = AmplitudeSource::Analytic;
  SpectralOracle::Options oracle{};
  // Seed for the first T; defaults to the classical parameters restricted to
  // the ansatz.
  std::optional<ActionParams> init;
};

// Fits at increasing T with continuation; a failed T is recorded with
// converged = false and the sweep carries on from the last good fit.
std::vector<FitResult> sweep(const ActionParams& model, const BoundarySet& bounds, const std::vector<double>& times,
                             const SweepOptions& options = {});

// Columns T, m, v-6 ... v6, lnZ, relative_error, converged, iterations.
std::string sweep_csv(const std::vector<FitResult>& results, const std::string& metadata = {});

// Classical parameters restricted to `ansatz` (missing exponents dropped).
ActionParams restrict_to_ansatz(const ActionParams& params, const std::vector<int>& ansatz);

}  // namespace qa
