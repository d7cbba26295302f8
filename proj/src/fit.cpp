#include "qaction/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "qaction/analytic.hpp"

namespace qa {

BoundarySet BoundarySet::uniform(double in_lo, double in_hi, int n_in, double fi_lo, double fi_hi, int n_fi) {
  if (n_in < 1 || n_fi < 1) throw InputError("boundary sets need at least one point per side");
  auto spread = [](double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    return v;
  };
  return {spread(in_lo, in_hi, n_in), spread(fi_lo, fi_hi, n_fi)};
}

void BoundarySet::validate(const ActionParams& model) const {
  if (initial_points.empty() || final_points.empty()) throw InputError("boundary sets must be non-empty");
  for (double x : initial_points)
    if (!model.in_domain(x)) throw InputError("initial boundary point outside the domain");
  for (double x : final_points)
    if (!model.in_domain(x)) throw InputError("final boundary point outside the domain");
}

AmplitudeTable build_table(const ActionParams& model, const BoundarySet& bounds, double T, AmplitudeSource source,
                           const SpectralOracle* oracle, Execution exec) {
  model.validate();
  bounds.validate(model);
  if (!(T > 0.0) || !std::isfinite(T)) throw InputError("transition time must be positive");
  if (source == AmplitudeSource::Analytic) inverse_square_parameters(model);
  if (source == AmplitudeSource::Oracle && !oracle) throw InputError("oracle table requested without an oracle");

  AmplitudeTable table;
  table.T = T;
  table.bounds = bounds;
  table.source = source;
  const int nf = table.n_final(), count = bounds.pairs();
  table.log_values.resize(count);
  table.log_time_derivatives.resize(count);
  for_each_index(
      count,
      [&](int i) {
        const double a = bounds.initial_points[i / nf], b = bounds.final_points[i % nf];
        if (source == AmplitudeSource::Analytic) {
          table.log_values[i] = euclidean_log_amplitude(model, a, b, T);
          table.log_time_derivatives[i] = euclidean_log_amplitude_time_derivative(model, a, b, T);
        } else {
          table.log_values[i] = oracle->log_amplitude(a, b, T);
          table.log_time_derivatives[i] = oracle->log_amplitude_time_derivative(a, b, T);
        }
        if (!std::isfinite(table.log_values[i]) || !std::isfinite(table.log_time_derivatives[i]))
          throw NumericalError("amplitude table entry is not finite");
      },
      exec);
  return table;
}

namespace {

std::vector<int> fitted_exponents(const std::vector<int>& ansatz) {
  std::set<int> unique(ansatz.begin(), ansatz.end());
  for (int k : unique)
    if (k % 2 != 0 || k < -6 || k > 6) throw InputError("ansatz exponents must be even and within [-6, 6]");
  std::vector<int> out;
  for (int k : unique)
    if (k != 0) out.push_back(k);
  return out;
}

bool has_constant(const std::vector<int>& ansatz) {
  return std::find(ansatz.begin(), ansatz.end(), 0) != ansatz.end();
}

ActionParams from_vector(const ActionParams& base, const std::vector<int>& exps, const std::vector<double>& x,
                         double v0) {
  ActionParams p = base;
  p.mass = x[0];
  p.potential = PotentialSpec{};
  for (std::size_t j = 0; j < exps.size(); ++j) p.potential.set(exps[j], x[j + 1]);
  p.potential.set(0, v0);
  if (p.potential.has_negative_powers()) p.domain = Domain::HalfLine;
  return p;
}

TimeGrid grid_for(const AmplitudeTable& table, const FitOptions& options) {
  return TimeGrid::proportional(table.T, options.points_per_unit);
}

// Discrete actions for every boundary pair; false when any solve fails.
bool solve_actions(const AmplitudeTable& table, const ActionParams& q, const FitOptions& options,
                   FitWarmStart* warm, std::vector<double>& actions) {
  const int nf = table.n_final(), count = table.bounds.pairs();
  const TimeGrid grid = grid_for(table, options);
  actions.assign(count, 0.0);
  if (warm && static_cast<int>(warm->paths.size()) != count) warm->paths.assign(count, std::nullopt);
  std::vector<char> ok(count, 0);
  for_each_index(
      count,
      [&](int i) {
        const double a = table.bounds.initial_points[i / nf], b = table.bounds.final_points[i % nf];
        const Trajectory* guess = (warm && warm->paths[i]) ? &*warm->paths[i] : nullptr;
        auto r = solve_bvp_detailed(q, a, b, grid, guess, options.bvp);
        if (!r.converged) return;
        actions[i] = action_value(q, r.trajectory);
        ok[i] = std::isfinite(actions[i]);
        if (warm) warm->paths[i] = std::move(r.trajectory);
      },
      options.exec);
  return std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
}

double profiled_log_norm(const AmplitudeTable& table, const std::vector<double>& actions) {
  double sum = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) sum += table.log_values[i] + actions[i];
  return sum / static_cast<double>(actions.size());
}

double relative_error_from(const AmplitudeTable& table, const std::vector<double>& actions, double log_norm) {
  const double shift = *std::max_element(table.log_values.begin(), table.log_values.end());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const double g = std::exp(table.log_values[i] - shift);
    num += std::abs(g - std::exp(log_norm - actions[i] - shift));
    den += g;
  }
  return num / den;
}

}  // namespace

FitEvaluation evaluate_fit(const AmplitudeTable& table, const ActionParams& params, const FitOptions& options,
                           FitWarmStart* warm) {
  FitEvaluation ev{std::numeric_limits<double>::infinity(), 0.0, {}};
  if (!(params.mass > 0.0)) return ev;
  if (!solve_actions(table, params, options, warm, ev.actions)) return ev;
  ev.log_norm = profiled_log_norm(table, ev.actions);
  double obj = 0.0;
  for (std::size_t i = 0; i < ev.actions.size(); ++i) {
    const double r = table.log_values[i] - ev.log_norm + ev.actions[i];
    obj += r * r;
  }
  ev.objective = obj;
  return ev;
}

double relative_fit_error(const AmplitudeTable& table, const ActionParams& params, double log_norm,
                          const FitOptions& options) {
  std::vector<double> actions;
  if (!solve_actions(table, params, options, nullptr, actions))
    throw NumericalError("boundary value solve failed while computing the fit error");
  return relative_error_from(table, actions, log_norm);
}

ActionParams restrict_to_ansatz(const ActionParams& params, const std::vector<int>& ansatz) {
  ActionParams p = params;
  p.potential = PotentialSpec{};
  for (int k : ansatz) p.potential.set(k, params.potential.coefficient(k));
  if (p.potential.has_negative_powers()) p.domain = Domain::HalfLine;
  return p;
}

FitResult fit_at_time(const AmplitudeTable& table, const ActionParams& init, const FitOptions& options,
                      FitWarmStart* warm) {
  init.validate();
  table.bounds.validate(init);
  const auto exps = fitted_exponents(options.ansatz);
  const bool with_v0 = has_constant(options.ansatz);
  const double hbar = init.hbar;

  FitWarmStart local;
  FitWarmStart* ws = warm ? warm : &local;

  std::vector<double> x0{init.mass};
  for (int k : exps) x0.push_back(init.potential.coefficient(k));
  auto objective = [&](const std::vector<double>& x) {
    if (!(x[0] > 0.0)) return std::numeric_limits<double>::infinity();
    return evaluate_fit(table, from_vector(init, exps, x, 0.0), options, ws).objective;
  };

  FitResult result;
  result.T = table.T;
  const auto nm = nelder_mead(objective, x0, x0, options.optimiser);
  result.iterations = nm.iterations;
  result.evaluations = nm.evaluations;
  result.objective = nm.value;
  result.converged = nm.converged && std::isfinite(nm.value);
  if (!std::isfinite(nm.value)) {
    result.params = init;
    result.message = "no valid objective evaluation";
    return result;
  }

  const ActionParams rest = from_vector(init, exps, nm.x, 0.0);
  const FitEvaluation ev = evaluate_fit(table, rest, options, ws);
  double v0 = 0.0;
  if (with_v0) {
    // v~0 from matching d ln G / dT with Z~ held fixed in T:
    // d ln G/dT = -(d Sigma_rest/dT) - v~0 / hbar.
    const TimeGrid grid = grid_for(table, options);
    const int nf = table.n_final(), count = table.bounds.pairs();
    std::vector<double> dtime(count);
    for_each_index(
        count,
        [&](int i) {
          const double a = table.bounds.initial_points[i / nf], b = table.bounds.final_points[i % nf];
          const auto bundle = solve_bundle(rest, a, b, grid);
          dtime[i] = sensitivities(rest, bundle).d_time;
        },
        options.exec);
    double sum = 0.0;
    for (int i = 0; i < count; ++i) sum += hbar * table.log_time_derivatives[i] + dtime[i];
    v0 = -sum / count;
  }
  result.params = from_vector(init, exps, nm.x, v0);
  std::vector<double> actions = ev.actions;
  for (double& s : actions) s += v0 * table.T / hbar;
  result.log_norm = profiled_log_norm(table, actions);
  result.relative_error = relative_error_from(table, actions, result.log_norm);
  if (!result.converged) result.message = "simplex did not converge within the evaluation budget";
  return result;
}

std::map<std::string, double> parameter_uncertainty(const FitResult& result, const AmplitudeTable& table,
                                                    const FitOptions& options) {
  if (!result.converged) throw InputError("uncertainties need a converged fit");
  const auto exps = fitted_exponents(options.ansatz);
  const int count = table.bounds.pairs(), np = 1 + static_cast<int>(exps.size());
  const int nf = table.n_final();
  const TimeGrid grid = grid_for(table, options);
  const ActionParams& q = result.params;

  std::vector<ActionSensitivities> sens(count);
  for_each_index(
      count,
      [&](int i) {
        const double a = table.bounds.initial_points[i / nf], b = table.bounds.final_points[i % nf];
        sens[i] = sensitivities(q, solve_bundle(q, a, b, grid));
      },
      options.exec);

  // Residual Jacobian with ln Z~ profiled out: columns are centred.
  Eigen::MatrixXd J(count, np);
  for (int i = 0; i < count; ++i) {
    J(i, 0) = sens[i].d_mass;
    for (std::size_t j = 0; j < exps.size(); ++j) J(i, j + 1) = sens[i].coeff(exps[j]);
  }
  J.rowwise() -= J.colwise().mean();
  const double dof = std::max(1, count - np - 1);
  const double s2 = result.objective / dof;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-12 * (sv.size() ? sv(0) : 0.0);
  std::vector<double> variance(np, 0.0);
  std::vector<bool> flat(np, false);
  for (int c = 0; c < sv.size(); ++c) {
    const auto v = svd.matrixV().col(c);
    for (int p = 0; p < np; ++p) {
      if (sv(c) <= cutoff) {
        if (std::abs(v(p)) > 1e-6) flat[p] = true;
      } else {
        variance[p] += v(p) * v(p) / (sv(c) * sv(c));
      }
    }
  }
  std::map<std::string, double> out;
  auto put = [&](const std::string& key, int p) {
    out[key] = flat[p] ? std::numeric_limits<double>::infinity() : std::sqrt(s2 * variance[p]);
  };
  put("mass", 0);
  for (std::size_t j = 0; j < exps.size(); ++j) put("v" + std::to_string(exps[j]), static_cast<int>(j) + 1);
  if (has_constant(options.ansatz)) {
    // Spread of the per-pair time-derivative estimates of v~0.
    double mean = 0.0, sq = 0.0;
    std::vector<double> est(count);
    for (int i = 0; i < count; ++i) {
      est[i] = -(q.hbar * table.log_time_derivatives[i] + sens[i].d_time) + q.potential.coefficient(0);
      mean += est[i] / count;
    }
    for (double e : est) sq += (e - mean) * (e - mean);
    out["v0"] = count > 1 ? std::sqrt(sq / (count - 1) / count) : std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<FitResult> sweep(const ActionParams& model, const BoundarySet& bounds, const std::vector<double>& times,
                             const SweepOptions& options) {
  model.validate();
  bounds.validate(model);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0)) throw InputError("sweep times must be positive");
    if (i > 0 && !(times[i] > times[i - 1])) throw InputError("sweep times must be strictly increasing");
  }
  std::vector<FitResult> out;
  if (times.empty()) return out;

  std::optional<SpectralOracle> oracle;
  if (options.source == AmplitudeSource::Oracle) {
    auto o = options.oracle;
    o.t_min = std::min(o.t_min, times.front());
    oracle.emplace(model, o);
  }
  ActionParams seed = options.init ? *options.init : restrict_to_ansatz(model, options.fit.ansatz);
  FitWarmStart warm;
  for (double T : times) {
    try {
      const auto table = build_table(model, bounds, T, options.source, oracle ? &*oracle : nullptr, options.fit.exec);
      auto r = fit_at_time(table, seed, options.fit, &warm);
      if (r.converged) seed = r.params;
      out.push_back(std::move(r));
    } catch (const NumericalError& e) {
      FitResult r;
      r.T = T;
      r.params = seed;
      r.converged = false;
      r.message = e.what();
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string sweep_csv(const std::vector<FitResult>& results, const std::string& metadata) {
  std::ostringstream out;
  out.precision(12);
  if (!metadata.empty()) out << metadata;
  out << "T,m";
  for (int k = -6; k <= 6; k += 2) out << ",v" << k;
  out << ",lnZ,relative_error,converged,iterations\n";
  for (const auto& r : results) {
    out << r.T << ',' << r.params.mass;
    for (int k = -6; k <= 6; k += 2) out << ',' << r.params.potential.coefficient(k);
    out << ',' << r.log_norm << ',' << r.relative_error << ',' << (r.converged ? 1 : 0) << ',' << r.iterations
        << '\n';
  }
  return out.str();
}

}  // namespace qa
