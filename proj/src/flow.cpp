#include "qaction/flow.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace qa {

void FlowState::validate() const {
  params.validate();
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InputError("flow state needs beta > 0");
  if (!params.in_domain(initial_point)) throw InputError("flow initial point outside the domain");
  std::set<int> unique(ansatz.begin(), ansatz.end());
  if (unique.size() != ansatz.size()) throw InputError("flow ansatz has repeated exponents");
  for (int k : ansatz)
    if (k % 2 != 0 || k < -6 || k > 6) throw InputError("flow ansatz exponents must be even and within [-6, 6]");
  if (static_cast<int>(final_points.size()) < unknowns() + 2)
    throw InputError("flow needs at least (unknowns + 2) final points");
  for (double x : final_points)
    if (!params.in_domain(x)) throw InputError("flow final point outside the domain");
}

TimeGrid flow_grid(const FlowState& state, const FlowOptions& options) {
  const double T = state.params.hbar * state.beta;
  if (options.segments > 0) return TimeGrid::fixed(T, options.segments);
  return TimeGrid::proportional(T, options.points_per_unit);
}

namespace {

std::vector<int> sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Discrete action at a shifted duration with the same segment count.
double action_at(const ActionParams& q, double a, double b, double T, int segments, const Trajectory& seed) {
  return action_value(q, solve_bvp(q, a, b, TimeGrid::fixed(T, segments), &seed));
}

}  // namespace

FlowSystem assemble_system(const FlowState& state, const FlowOptions& options, FlowWarmStart* warm) {
  const auto& q = state.params;
  const auto exps = sorted(state.ansatz);
  const int rows = static_cast<int>(state.final_points.size()), cols = state.unknowns();
  const TimeGrid grid = flow_grid(state, options);
  if (warm && static_cast<int>(warm->bundles.size()) != rows) warm->bundles.assign(rows, std::nullopt);

  FlowSystem sys{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows), std::vector<ActionSensitivities>(rows)};
  const double hbar = q.hbar, m = options.classical.mass;
  for_each_index(
      rows,
      [&](int j) {
        const double xf = state.final_points[j];
        TrajectoryBundle bundle = [&] {
          try {
            const TrajectoryBundle* guess = (warm && warm->bundles[j]) ? &*warm->bundles[j] : nullptr;
            return solve_bundle(q, state.initial_point, xf, grid, guess);
          } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "flow assembly failed at x_f = " << xf << ": " << e.what();
            throw NumericalError(msg.str());
          }
        }();
        auto s = sensitivities(q, bundle);
        if (options.time_derivative == TimeDerivative::FiniteDifference) {
          const double T = grid.duration(), d = 1e-4 * std::max(1.0, T);
          s.d_time = hbar *
                     (action_at(q, state.initial_point, xf, T + d, grid.segments(), bundle.centre) -
                      action_at(q, state.initial_point, xf, T - d, grid.segments(), bundle.centre)) /
                     (2.0 * d);
        }
        sys.A(j, 0) = -1.0;
        sys.A(j, 1) = s.d_mass;
        for (std::size_t c = 0; c < exps.size(); ++c) sys.A(j, 2 + c) = s.coeff(exps[c]);
        sys.r(j) = -s.d_time - hbar * hbar / (2.0 * m) * (s.d_x * s.d_x - s.d_xx) +
                   potential_value(options.classical, xf);
        sys.rows[j] = s;
        if (warm) warm->bundles[j] = std::move(bundle);
      },
      options.exec);
  return sys;
}

FlowSolution solve_system(const FlowSystem& system, const FlowState& state, const FlowOptions& options) {
  const auto exps = sorted(state.ansatz);
  const int cols = static_cast<int>(system.A.cols());
  const auto it0 = std::find(exps.begin(), exps.end(), 0);
  const bool pinned = options.degeneracy == Degeneracy::PinnedEnergy && it0 != exps.end();
  const int c0 = pinned ? 2 + static_cast<int>(it0 - exps.begin()) : -1;

  // In pinned mode the v~0 column is eliminated through
  // dv0 = -sum_k x_min^k dv_k.
  std::vector<double> link(cols, 0.0);
  Eigen::MatrixXd A = system.A;
  if (pinned) {
    const double xm = potential_minimum(state.params).x_min;
    for (std::size_t c = 0; c < exps.size(); ++c) {
      const int col = 2 + static_cast<int>(c);
      if (col == c0) continue;
      link[col] = -std::pow(xm, exps[c]);
      A.col(col) += link[col] * system.A.col(c0);
    }
    A.col(c0).setZero();
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-12 * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  svd.setThreshold(1e-12);

  FlowSolution sol;
  sol.rate = svd.solve(system.r);
  if (pinned) {
    double dv0 = 0.0;
    for (int c = 0; c < cols; ++c) dv0 += link[c] * sol.rate(c);
    sol.rate(c0) = dv0;
  }
  sol.rank = rank;
  sol.rank_deficiency = (pinned ? cols - 1 : cols) - rank;
  sol.condition = rank > 0 ? sv(0) / sv(rank - 1) : INFINITY;
  sol.residual_norm = (system.A * sol.rate - system.r).norm();
  const double dv0 = it0 != exps.end() ? sol.rate(2 + (it0 - exps.begin())) : 0.0;
  sol.combination = -sol.rate(0) + state.beta * dv0;
  return sol;
}

namespace {

FlowState advanced(const FlowState& s, double dbeta, const Eigen::VectorXd& rate) {
  const auto exps = sorted(s.ansatz);
  FlowState out = s;
  out.beta = s.beta + dbeta;
  out.log_norm += dbeta * rate(0);
  out.params.mass += dbeta * rate(1);
  for (std::size_t c = 0; c < exps.size(); ++c)
    out.params.potential.set(exps[c], s.params.potential.coefficient(exps[c]) + dbeta * rate(2 + c));
  if (!(out.params.mass > 0.0)) throw NumericalError("flow drove the mass non-positive");
  return out;
}

// Known degeneracy: one null direction when both ln Z~ and v~0 flow.
int expected_deficiency(const FlowState& s, const FlowOptions& o) {
  const bool has_v0 = std::find(s.ansatz.begin(), s.ansatz.end(), 0) != s.ansatz.end();
  return (has_v0 && o.degeneracy == Degeneracy::MinimumNorm) ? 1 : 0;
}

}  // namespace

FlowState rk4_step(const FlowState& state, double dbeta, const FlowOptions& options, FlowWarmStart* warm,
                   FlowDiagnostics* diag) {
  if (!(dbeta >= 0.0)) throw InputError("dbeta must be non-negative");
  if (dbeta == 0.0) return state;
  auto rate = [&](const FlowState& s, FlowSolution* keep) {
    const auto sys = assemble_system(s, options, warm);
    const auto sol = solve_system(sys, s, options);
    if (sol.rank_deficiency != expected_deficiency(s, options) || sol.condition > options.condition_limit)
      throw NumericalError("flow system is ill-conditioned beyond the lnZ/v0 degeneracy (condition " +
                           std::to_string(sol.condition) + ")");
    if (keep) *keep = sol;
    return sol.rate;
  };
  FlowSolution first;
  const Eigen::VectorXd k1 = rate(state, &first);
  const Eigen::VectorXd k2 = rate(advanced(state, 0.5 * dbeta, k1), nullptr);
  const Eigen::VectorXd k3 = rate(advanced(state, 0.5 * dbeta, k2), nullptr);
  const Eigen::VectorXd k4 = rate(advanced(state, dbeta, k3), nullptr);
  const Eigen::VectorXd k = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
  if (diag) *diag = {dbeta, first.residual_norm, first.condition, first.rank_deficiency, first.combination};
  return advanced(state, dbeta, k);
}

FlowState step(const FlowState& state, double dbeta, const FlowOptions& options, FlowWarmStart* warm,
               FlowDiagnostics* diag) {
  double h = dbeta;
  for (int attempt = 0;; ++attempt) {
    try {
      return rk4_step(state, h, options, warm, diag);
    } catch (const NumericalError& e) {
      if (attempt >= options.max_halvings)
        throw NumericalError(std::string("flow step rejected after repeated halving: ") + e.what());
      h *= 0.5;
    }
  }
}

FlowTrace run(const FlowState& init, double beta_end, double dbeta, const FlowOptions& options) {
  init.validate();
  options.classical.validate();
  if (!(dbeta > 0.0)) throw InputError("dbeta must be positive");
  if (beta_end < init.beta) throw InputError("beta_end lies before the initial beta");
  if (options.stride < 1) throw InputError("trace stride must be at least 1");

  FlowOptions opts = options;
  if (opts.segments == 0)
    opts.segments = std::max(10, static_cast<int>(std::lround(opts.points_per_unit * init.params.hbar * beta_end)));

  FlowTrace trace;
  trace.states.push_back(init);
  trace.diagnostics.push_back({});
  FlowWarmStart warm;
  FlowState s = init;
  long count = 0;
  const double eps = 1e-12 * std::max(1.0, beta_end);
  while (s.beta < beta_end - eps) {
    FlowDiagnostics d;
    const double h = std::min(dbeta, beta_end - s.beta);
    s = step(s, h, opts, &warm, &d);
    if (beta_end - s.beta < eps) s.beta = beta_end;
    ++count;
    if (count % opts.stride == 0 || s.beta >= beta_end) {
      trace.states.push_back(s);
      trace.diagnostics.push_back(d);
    }
  }
  return trace;
}

FlowState bootstrap_state(const AmplitudeTable& table, const ActionParams& init, const FitOptions& fit_options) {
  if (table.n_initial() != 1) throw InputError("flow bootstrap needs a table with a single initial point");
  const auto fit = fit_at_time(table, init, fit_options);
  if (!fit.converged) throw NumericalError("bootstrap fit did not converge: " + fit.message);
  FlowState s;
  s.beta = table.T / init.hbar;
  s.params = fit.params;
  s.log_norm = fit.log_norm;
  s.initial_point = table.bounds.initial_points.front();
  s.final_points = table.bounds.final_points;
  const std::set<int> unique(fit_options.ansatz.begin(), fit_options.ansatz.end());
  s.ansatz.assign(unique.begin(), unique.end());
  return s;
}

std::string trace_csv(const FlowTrace& trace, const std::string& metadata) {
  std::ostringstream out;
  out.precision(12);
  if (!metadata.empty()) out << metadata;
  out << "beta,m";
  for (int k = -6; k <= 6; k += 2) out << ",v" << k;
  out << ",lnZ,residual_norm,condition,rank_flag\n";
  for (std::size_t i = 0; i < trace.states.size(); ++i) {
    const auto& s = trace.states[i];
    const auto& d = trace.diagnostics[i];
    out << s.beta << ',' << s.params.mass;
    for (int k = -6; k <= 6; k += 2) out << ',' << s.params.potential.coefficient(k);
    out << ',' << s.log_norm << ',' << d.residual_norm << ',' << d.condition << ',' << d.rank_deficiency << '\n';
  }
  return out.str();
}

}  // namespace qa
