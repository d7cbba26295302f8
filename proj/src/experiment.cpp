#include "qaction/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "qaction/analytic.hpp"
#include "qaction/errors.hpp"
#include "qaction/fit.hpp"
#include "qaction/flow.hpp"
#include "qaction/oracle.hpp"
#include "qaction/quadrature.hpp"
#include "qaction/specfun.hpp"

namespace qa {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw InputError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + "." + key + " has the wrong type");
  }
}

// An explicit list, or {"lo", "hi", "n"} for n equidistant points.
std::vector<double> parse_points(const json& j, const std::string& where) {
  if (j.is_array()) {
    std::vector<double> out;
    for (const auto& v : j) {
      if (!v.is_number()) throw InputError(where + " must hold numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  check_keys(j, {"lo", "hi", "n"}, where);
  if (!j.contains("lo") || !j.contains("hi") || !j.contains("n"))
    throw InputError(where + " needs lo, hi and n");
  const double lo = get<double>(j, "lo", 0.0, where), hi = get<double>(j, "hi", 0.0, where);
  const int n = get<int>(j, "n", 0, where);
  if (n < 1 || !(hi >= lo)) throw InputError(where + " needs n >= 1 and hi >= lo");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return out;
}

// A list, {"start", "stop", "step"} or {"start", "stop", "n"}.
std::vector<double> parse_times(const json& j, const std::string& where) {
  if (j.is_array()) return parse_points(j, where);
  check_keys(j, {"start", "stop", "step", "n"}, where);
  const double start = get<double>(j, "start", NAN, where), stop = get<double>(j, "stop", NAN, where);
  if (!std::isfinite(start) || !std::isfinite(stop) || stop < start)
    throw InputError(where + " needs finite start <= stop");
  if (j.contains("step") == j.contains("n")) throw InputError(where + " needs exactly one of step and n");
  std::vector<double> out;
  if (j.contains("n")) {
    const int n = get<int>(j, "n", 0, where);
    if (n < 1) throw InputError(where + ".n must be positive");
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? start : start + (stop - start) * i / (n - 1));
  } else {
    const double step = get<double>(j, "step", 0.0, where);
    if (!(step > 0.0)) throw InputError(where + ".step must be positive");
    const int n = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (int i = 0; i < n; ++i) out.push_back(start + i * step);
  }
  return out;
}

SpectralOracle::Options parse_oracle(const json& j, const std::string& where) {
  check_keys(j, {"spacing", "length", "t_min", "extrapolate"}, where);
  SpectralOracle::Options o;
  o.spacing = get<double>(j, "spacing", o.spacing, where);
  o.length = get<double>(j, "length", o.length, where);
  o.t_min = get<double>(j, "t_min", o.t_min, where);
  o.extrapolate = get<bool>(j, "extrapolate", o.extrapolate, where);
  if (!(o.spacing > 0.0) || !(o.length > 0.0) || !(o.t_min > 0.0))
    throw InputError(where + " needs positive spacing, length and t_min");
  return o;
}

AmplitudeSource parse_source(const json& j, const char* key, const std::string& where) {
  const auto s = get<std::string>(j, key, "analytic", where);
  if (s == "analytic") return AmplitudeSource::Analytic;
  if (s == "oracle") return AmplitudeSource::Oracle;
  throw InputError(where + "." + key + " must be 'analytic' or 'oracle'");
}

std::vector<int> parse_ansatz(const json& j, const std::string& where) {
  auto ansatz = get<std::vector<int>>(j, "ansatz", {0, 2, -2}, where);
  std::vector<int> seen;
  for (int k : ansatz) {
    if (!PotentialSpec::allowed_exponent(k)) throw InputError(where + ".ansatz has an invalid exponent");
    if (std::find(seen.begin(), seen.end(), k) != seen.end())
      throw InputError(where + ".ansatz repeats an exponent");
    seen.push_back(k);
  }
  return ansatz;
}

ActionParams parse_model(const json& config) {
  if (!config.contains("model")) throw InputError("config needs a model");
  try {
    return config.at("model").get<ActionParams>();
  } catch (const json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
}

ActionParams parse_params(const json& j, const ActionParams& base, const std::string& where) {
  check_keys(j, {"mass", "coefficients"}, where);
  ActionParams p = base;
  p.mass = get<double>(j, "mass", base.mass, where);
  if (j.contains("coefficients")) p.potential = j.at("coefficients").get<PotentialSpec>();
  p.validate();
  return p;
}

void parse_fit_options(const json& j, const std::string& where, FitOptions& fit) {
  fit.ansatz = parse_ansatz(j, where);
  fit.points_per_unit = get<int>(j, "points_per_unit", fit.points_per_unit, where);
  if (fit.points_per_unit < 2) throw InputError(where + ".points_per_unit must be >= 2");
  if (j.contains("optimiser")) {
    const auto& o = j.at("optimiser");
    const std::string w = where + ".optimiser";
    check_keys(o, {"relative_diameter", "max_evaluations", "initial_step", "restarts"}, w);
    fit.optimiser.relative_diameter = get<double>(o, "relative_diameter", fit.optimiser.relative_diameter, w);
    fit.optimiser.max_evaluations = get<int>(o, "max_evaluations", fit.optimiser.max_evaluations, w);
    fit.optimiser.initial_step = get<double>(o, "initial_step", fit.optimiser.initial_step, w);
    fit.optimiser.restarts = get<int>(o, "restarts", fit.optimiser.restarts, w);
  }
  if (j.contains("bvp")) {
    const auto& b = j.at("bvp");
    const std::string w = where + ".bvp";
    check_keys(b, {"max_iterations", "tolerance"}, w);
    fit.bvp.max_iterations = get<int>(b, "max_iterations", fit.bvp.max_iterations, w);
    fit.bvp.tolerance = get<double>(b, "tolerance", fit.bvp.tolerance, w);
  }
}

// ---- propagator ----

struct PropagatorSpec {
  std::vector<double> a{0.5, 1.0, 2.0, 3.0}, b{0.5, 1.0, 2.0, 3.0}, T{0.2, 0.4, 1.0, 2.0, 4.0};
  SpectralOracle::Options oracle{};
};

PropagatorSpec parse_propagator(const json& config) {
  PropagatorSpec s;
  if (!config.contains("propagator")) return s;
  const auto& j = config.at("propagator");
  check_keys(j, {"a", "b", "T", "oracle"}, "propagator");
  if (j.contains("a")) s.a = parse_points(j.at("a"), "propagator.a");
  if (j.contains("b")) s.b = parse_points(j.at("b"), "propagator.b");
  if (j.contains("T")) s.T = parse_times(j.at("T"), "propagator.T");
  if (j.contains("oracle")) s.oracle = parse_oracle(j.at("oracle"), "propagator.oracle");
  for (double t : s.T)
    if (!(t > 0.0)) throw InputError("propagator.T must be positive");
  return s;
}

double harmonic_kernel(const InverseSquare& p, double b, double a, double T) {
  const double s = std::sinh(p.omega * T), c = std::cosh(p.omega * T);
  const double k = p.mass * p.omega / p.hbar;
  return std::sqrt(k / (2.0 * std::numbers::pi * s)) * std::exp(-k / (2.0 * s) * ((a * a + b * b) * c - 2.0 * a * b));
}

CommandResult cmd_propagator(const json& config, const RunContext& ctx) {
  const auto model = parse_model(config);
  const auto spec = parse_propagator(config);
  const auto p = inverse_square_parameters(model);
  const bool image = p.g == 0.0;

  std::optional<SpectralOracle> oracle;
  if (!spec.T.empty()) {
    auto o = spec.oracle;
    o.t_min = std::min(o.t_min, *std::min_element(spec.T.begin(), spec.T.end()));
    oracle.emplace(model, o);
  }

  std::ostringstream out;
  out << std::setprecision(12) << metadata_line(config, "propagator", ctx.seed) << '\n';
  out << "a,b,T,analytic,oracle,rel_diff";
  if (image) out << ",image,image_rel_diff";
  out << '\n';
  double worst = 0.0, worst_image = 0.0;
  int rows = 0;
  for (double T : spec.T)
    for (double a : spec.a)
      for (double b : spec.b) {
        const double g = std::exp(euclidean_log_amplitude(model, a, b, T));
        const double o = oracle->amplitude(a, b, T);
        const double d = std::abs(o - g) / std::abs(g);
        worst = std::max(worst, d);
        out << a << ',' << b << ',' << T << ',' << g << ',' << o << ',' << d;
        if (image) {
          const double im = harmonic_kernel(p, b, a, T) - harmonic_kernel(p, b, -a, T);
          const double di = std::abs(g - im) / std::abs(im);
          worst_image = std::max(worst_image, di);
          out << ',' << im << ',' << di;
        }
        out << '\n';
        ++rows;
      }
  CommandResult r;
  r.files.push_back({"propagator.csv", out.str()});
  r.summary = {{"rows", rows}, {"max_rel_diff", worst}};
  if (image) r.summary["max_image_rel_diff"] = worst_image;
  return r;
}

// ---- spectrum ----

struct SpectrumSpec {
  int states = 10;
  SpectralOracle::Options oracle{};
};

SpectrumSpec parse_spectrum(const json& config) {
  SpectrumSpec s;
  if (!config.contains("spectrum")) return s;
  const auto& j = config.at("spectrum");
  check_keys(j, {"states", "oracle"}, "spectrum");
  s.states = get<int>(j, "states", s.states, "spectrum");
  if (s.states < 1) throw InputError("spectrum.states must be positive");
  if (j.contains("oracle")) s.oracle = parse_oracle(j.at("oracle"), "spectrum.oracle");
  return s;
}

CommandResult cmd_spectrum(const json& config, const RunContext& ctx) {
  const auto model = parse_model(config);
  const auto spec = parse_spectrum(config);
  const auto grid = SpatialGrid::default_for(model, spec.oracle.spacing, spec.oracle.length);
  const auto decomp = spectrum(discretize(model, grid), spec.states);
  CommandResult r;
  r.files.push_back({"spectrum.csv", metadata_line(config, "spectrum", ctx.seed) + "\n" + spectrum_csv(decomp)});
  r.summary = {{"ground_energy", decomp.energies.front()}, {"states", decomp.n_states()}};
  try {
    const auto p = inverse_square_parameters(model);
    const double gamma = gamma_index(model);
    double worst = 0.0;
    for (int n = 0; n < decomp.n_states(); ++n)
      worst = std::max(worst, std::abs(decomp.energies[n] - p.hbar * p.omega * (2.0 * n + 1.0 + gamma)));
    r.summary["max_abs_diff_exact"] = worst;
  } catch (const InputError&) {
  }
  return r;
}

// ---- fit ----

struct FitRun {
  std::string label;
  BoundarySet bounds;
  int points_per_unit = 500;
};

struct FitSpec {
  SweepOptions sweep;
  std::vector<double> times;
  std::vector<FitRun> runs;
  bool mesh_study = false;
  double divergence_threshold = 1e-3;
  bool uncertainty = false;
};

FitSpec parse_fit(const json& config) {
  const auto model = parse_model(config);
  if (!config.contains("fit")) throw InputError("config needs a fit section");
  const auto& j = config.at("fit");
  check_keys(j, {"ansatz", "times", "points_per_unit", "source", "oracle", "optimiser", "bvp", "initial",
                 "initial_points", "final_points", "runs", "mesh_study", "divergence_threshold", "uncertainty"},
             "fit");
  FitSpec s;
  parse_fit_options(j, "fit", s.sweep.fit);
  s.sweep.source = parse_source(j, "source", "fit");
  if (j.contains("oracle")) s.sweep.oracle = parse_oracle(j.at("oracle"), "fit.oracle");
  if (j.contains("initial")) s.sweep.init = parse_params(j.at("initial"), model, "fit.initial");
  if (!j.contains("times")) throw InputError("fit needs times");
  s.times = parse_times(j.at("times"), "fit.times");
  s.mesh_study = get<bool>(j, "mesh_study", false, "fit");
  s.divergence_threshold = get<double>(j, "divergence_threshold", s.divergence_threshold, "fit");
  s.uncertainty = get<bool>(j, "uncertainty", false, "fit");

  auto base_points = [&](const json& src, const char* key, const std::string& where) -> std::optional<std::vector<double>> {
    if (!src.contains(key)) return std::nullopt;
    return parse_points(src.at(key), where + "." + key);
  };
  const auto base_in = base_points(j, "initial_points", "fit");
  const auto base_fi = base_points(j, "final_points", "fit");

  auto make_run = [&](const json& src, const std::string& where, const std::string& label) {
    FitRun run;
    run.label = label;
    auto in = base_points(src, "initial_points", where);
    auto fi = base_points(src, "final_points", where);
    if (!in) in = base_in;
    if (!fi) fi = base_fi;
    if (!in || !fi) throw InputError(where + " needs initial_points and final_points");
    run.bounds = {*in, *fi};
    run.bounds.validate(model);
    run.points_per_unit = get<int>(src, "points_per_unit", s.sweep.fit.points_per_unit, where);
    if (run.points_per_unit < 2) throw InputError(where + ".points_per_unit must be >= 2");
    return run;
  };

  if (j.contains("runs")) {
    const auto& runs = j.at("runs");
    if (!runs.is_array() || runs.empty()) throw InputError("fit.runs must be a non-empty array");
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string where = "fit.runs[" + std::to_string(i) + "]";
      check_keys(runs[i], {"label", "initial_points", "final_points", "points_per_unit"}, where);
      s.runs.push_back(make_run(runs[i], where, get<std::string>(runs[i], "label", "run" + std::to_string(i), where)));
    }
  } else {
    s.runs.push_back(make_run(json::object(), "fit", "fit"));
  }
  for (double t : s.times)
    if (!(t > 0.0)) throw InputError("fit.times must be positive");
  if (s.mesh_study && s.runs.size() < 2) throw InputError("fit.mesh_study needs at least two runs");
  return s;
}

json products_json(const ActionParams& p) {
  const auto& v = p.potential;
  json j = {{"m", p.mass}};
  for (const auto& [k, c] : v.terms()) j["v" + std::to_string(k)] = c;
  j["m_v2"] = p.mass * v.coefficient(2);
  j["m_v-2"] = p.mass * v.coefficient(-2);
  return j;
}

CommandResult cmd_fit(const json& config, const RunContext& ctx) {
  const auto model = parse_model(config);
  auto spec = parse_fit(config);
  spec.sweep.fit.exec = ctx.exec;

  CommandResult r;
  r.summary["runs"] = json::array();
  std::vector<std::vector<FitResult>> all;
  for (const auto& run : spec.runs) {
    SweepOptions opts = spec.sweep;
    opts.fit.points_per_unit = run.points_per_unit;
    auto results = sweep(model, run.bounds, spec.times, opts);

    json s = {{"label", run.label}, {"points_per_unit", run.points_per_unit}};
    int converged = 0;
    double peak = -1.0, peak_T = NAN;
    for (const auto& f : results) {
      if (f.converged) ++converged;
      if (f.converged && f.relative_error > peak) {
        peak = f.relative_error;
        peak_T = f.T;
      }
    }
    s["converged"] = converged;
    s["total"] = static_cast<int>(results.size());
    if (peak >= 0.0) {
      s["peak_relative_error"] = peak;
      s["peak_T"] = peak_T;
    }
    if (!results.empty()) {
      s["final_T"] = results.back().T;
      s["final"] = products_json(results.back().params);
      s["final"]["relative_error"] = results.back().relative_error;
    }
    if (spec.uncertainty && !results.empty() && results.back().converged) {
      std::optional<SpectralOracle> oracle;
      if (opts.source == AmplitudeSource::Oracle) {
        auto o = opts.oracle;
        o.t_min = std::min(o.t_min, results.back().T);
        oracle.emplace(model, o);
      }
      const auto table = build_table(model, run.bounds, results.back().T, opts.source,
                                     oracle ? &*oracle : nullptr, ctx.exec);
      json u;
      for (const auto& [name, value] : parameter_uncertainty(results.back(), table, opts.fit))
        u[name] = std::isfinite(value) ? json(value) : json("inf");
      s["uncertainty"] = u;
    }
    const std::string name = spec.runs.size() == 1 ? "fit.csv" : "fit_" + run.label + ".csv";
    r.files.push_back({name, sweep_csv(results, metadata_line(config, "fit", ctx.seed) + "\n")});
    r.summary["runs"].push_back(s);
    all.push_back(std::move(results));
  }

  try {
    const auto a = asymptotic_quantum_params(model);
    r.summary["asymptotic"] = {{"m_v2", a.mass_v2}, {"m_v-2", a.mass_vm2}, {"energy", a.energy}};
  } catch (const InputError&) {
  }

  if (spec.mesh_study) {
    // Compare every run against the densest mesh on the products m~ v~2 and m~ v~-2.
    std::size_t ref = 0;
    for (std::size_t i = 1; i < spec.runs.size(); ++i)
      if (spec.runs[i].points_per_unit > spec.runs[ref].points_per_unit) ref = i;
    json mesh = json::array();
    for (std::size_t i = 0; i < spec.runs.size(); ++i) {
      if (i == ref) continue;
      json onset = nullptr;
      double worst = 0.0;
      for (std::size_t t = 0; t < spec.times.size(); ++t) {
        const auto& x = all[i][t].params;
        const auto& y = all[ref][t].params;
        double d = 0.0;
        for (int k : {2, -2}) {
          const double py = y.mass * y.potential.coefficient(k);
          if (py != 0.0) d = std::max(d, std::abs(x.mass * x.potential.coefficient(k) - py) / std::abs(py));
        }
        if (!all[i][t].converged || !all[ref][t].converged) d = INFINITY;
        worst = std::max(worst, d);
        if (onset.is_null() && d > spec.divergence_threshold) onset = spec.times[t];
      }
      mesh.push_back({{"label", spec.runs[i].label},
                      {"points_per_unit", spec.runs[i].points_per_unit},
                      {"divergence_onset_T", onset},
                      {"max_deviation", std::isfinite(worst) ? json(worst) : json("inf")}});
    }
    r.summary["mesh_study"] = {{"reference", spec.runs[ref].label},
                               {"threshold", spec.divergence_threshold},
                               {"runs", mesh}};
  }
  return r;
}

// ---- flow ----

struct FlowRunSpec {
  std::string label;
  json overrides;  // mass / coefficients / final_points / initial_point
};

struct FlowSpec {
  FlowOptions options;
  std::vector<int> ansatz{0, 2, -2};
  double beta_init = 0.0, beta_end = 0.0, dbeta = 0.0;
  double initial_point = 0.0;
  std::vector<double> final_points;
  std::optional<ActionParams> initial;
  double log_norm = 0.0;
  bool bootstrap = false;
  AmplitudeSource source = AmplitudeSource::Analytic;
  SpectralOracle::Options oracle{};
  FitOptions fit;
  std::vector<FlowRunSpec> runs;
  double spread_from = 2.5;
  std::optional<std::vector<double>> compare_times;
};

FlowSpec parse_flow(const json& config) {
  const auto model = parse_model(config);
  if (!config.contains("flow")) throw InputError("config needs a flow section");
  const auto& j = config.at("flow");
  check_keys(j, {"ansatz", "beta_init", "beta_end", "dbeta", "initial_point", "final_points", "initial", "log_norm",
                 "bootstrap", "source", "oracle", "fit", "runs", "degeneracy", "time_derivative", "points_per_unit",
                 "segments", "condition_limit", "max_halvings", "stride", "spread_from", "compare_fit"},
             "flow");
  FlowSpec s;
  s.options.classical = model;
  s.ansatz = parse_ansatz(j, "flow");
  for (const char* key : {"beta_init", "beta_end", "dbeta", "initial_point"})
    if (!j.contains(key)) throw InputError(std::string("flow needs ") + key);
  s.beta_init = get<double>(j, "beta_init", 0.0, "flow");
  s.beta_end = get<double>(j, "beta_end", 0.0, "flow");
  s.dbeta = get<double>(j, "dbeta", 0.0, "flow");
  s.initial_point = get<double>(j, "initial_point", 0.0, "flow");
  if (!(s.beta_init > 0.0) || s.beta_end < s.beta_init) throw InputError("flow needs 0 < beta_init <= beta_end");
  if (!(s.dbeta > 0.0)) throw InputError("flow.dbeta must be positive");
  if (!j.contains("final_points")) throw InputError("flow needs final_points");
  s.final_points = parse_points(j.at("final_points"), "flow.final_points");
  s.bootstrap = get<bool>(j, "bootstrap", false, "flow");
  if (j.contains("initial") == s.bootstrap) throw InputError("flow needs exactly one of initial and bootstrap");
  if (j.contains("initial")) s.initial = parse_params(j.at("initial"), model, "flow.initial");
  s.log_norm = get<double>(j, "log_norm", 0.0, "flow");
  s.source = parse_source(j, "source", "flow");
  if (j.contains("oracle")) s.oracle = parse_oracle(j.at("oracle"), "flow.oracle");
  if (j.contains("fit")) {
    check_keys(j.at("fit"), {"points_per_unit", "optimiser", "bvp"}, "flow.fit");
    parse_fit_options(j.at("fit"), "flow.fit", s.fit);
  }
  s.fit.ansatz = s.ansatz;

  const auto deg = get<std::string>(j, "degeneracy", "minimum_norm", "flow");
  if (deg == "minimum_norm")
    s.options.degeneracy = Degeneracy::MinimumNorm;
  else if (deg == "pinned_energy")
    s.options.degeneracy = Degeneracy::PinnedEnergy;
  else
    throw InputError("flow.degeneracy must be 'minimum_norm' or 'pinned_energy'");
  const auto td = get<std::string>(j, "time_derivative", "envelope", "flow");
  if (td == "envelope")
    s.options.time_derivative = TimeDerivative::Envelope;
  else if (td == "finite_difference")
    s.options.time_derivative = TimeDerivative::FiniteDifference;
  else
    throw InputError("flow.time_derivative must be 'envelope' or 'finite_difference'");
  s.options.points_per_unit = get<int>(j, "points_per_unit", s.options.points_per_unit, "flow");
  s.options.segments = get<int>(j, "segments", s.options.segments, "flow");
  s.options.condition_limit = get<double>(j, "condition_limit", s.options.condition_limit, "flow");
  s.options.max_halvings = get<int>(j, "max_halvings", s.options.max_halvings, "flow");
  s.options.stride = get<int>(j, "stride", s.options.stride, "flow");
  if (s.options.points_per_unit < 2 || s.options.segments < 0 || s.options.stride < 1 || s.options.max_halvings < 0)
    throw InputError("flow mesh, stride and halving settings are out of range");
  s.spread_from = get<double>(j, "spread_from", s.spread_from, "flow");

  if (j.contains("runs")) {
    const auto& runs = j.at("runs");
    if (!runs.is_array() || runs.empty()) throw InputError("flow.runs must be a non-empty array");
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string where = "flow.runs[" + std::to_string(i) + "]";
      check_keys(runs[i], {"label", "mass", "coefficients", "final_points", "initial_point"}, where);
      if (s.bootstrap && (runs[i].contains("mass") || runs[i].contains("coefficients")))
        throw InputError(where + " cannot override bootstrapped parameters");
      if (runs[i].contains("final_points")) parse_points(runs[i].at("final_points"), where + ".final_points");
      if (runs[i].contains("coefficients")) runs[i].at("coefficients").get<PotentialSpec>();
      s.runs.push_back({get<std::string>(runs[i], "label", "run" + std::to_string(i), where), runs[i]});
    }
  } else {
    s.runs.push_back({"flow", json::object()});
  }

  if (j.contains("compare_fit")) {
    const auto& c = j.at("compare_fit");
    check_keys(c, {"times"}, "flow.compare_fit");
    if (!c.contains("times")) throw InputError("flow.compare_fit needs times");
    s.compare_times = parse_times(c.at("times"), "flow.compare_fit.times");
  }
  return s;
}

// Linear interpolation of a traced quantity at beta.
double interpolate(const FlowTrace& trace, double beta, const std::function<double(const FlowState&)>& f) {
  const auto& st = trace.states;
  if (beta <= st.front().beta) return f(st.front());
  for (std::size_t i = 1; i < st.size(); ++i)
    if (beta <= st[i].beta) {
      const double w = (beta - st[i - 1].beta) / (st[i].beta - st[i - 1].beta);
      return (1.0 - w) * f(st[i - 1]) + w * f(st[i]);
    }
  return f(st.back());
}

CommandResult cmd_flow(const json& config, const RunContext& ctx) {
  const auto model = parse_model(config);
  auto spec = parse_flow(config);
  spec.options.exec = ctx.exec;
  spec.fit.exec = ctx.exec;
  const double hbar = model.hbar;

  std::optional<SpectralOracle> oracle;
  if (spec.source == AmplitudeSource::Oracle && (spec.bootstrap || spec.compare_times)) {
    auto o = spec.oracle;
    double t_min = spec.beta_init * hbar;
    if (spec.compare_times)
      for (double t : *spec.compare_times) t_min = std::min(t_min, t);
    o.t_min = std::min(o.t_min, t_min);
    oracle.emplace(model, o);
  }

  std::vector<FlowTrace> traces;
  CommandResult r;
  r.summary["runs"] = json::array();
  const int expected_deficiency =
      spec.options.degeneracy == Degeneracy::MinimumNorm &&
              std::find(spec.ansatz.begin(), spec.ansatz.end(), 0) != spec.ansatz.end()
          ? 1
          : 0;
  bool rank_ok = true;
  for (const auto& flow_run : spec.runs) {
    const auto& o = flow_run.overrides;
    const double x_in = get<double>(o, "initial_point", spec.initial_point, "flow.runs");
    const auto finals = o.contains("final_points") ? parse_points(o.at("final_points"), "flow.runs.final_points")
                                                   : spec.final_points;
    FlowState init;
    if (spec.bootstrap) {
      BoundarySet bounds{{x_in}, finals};
      bounds.validate(model);
      const auto table = build_table(model, bounds, spec.beta_init * hbar, spec.source, oracle ? &*oracle : nullptr,
                                     ctx.exec);
      init = bootstrap_state(table, restrict_to_ansatz(model, spec.ansatz), spec.fit);
    } else {
      init.beta = spec.beta_init;
      init.params = *spec.initial;
      init.params.mass = get<double>(o, "mass", init.params.mass, "flow.runs");
      if (o.contains("coefficients")) {
        const auto overrides = o.at("coefficients").get<PotentialSpec>();
        for (const auto& [k, c] : overrides.terms()) init.params.potential.set(k, c);
      }
      init.log_norm = spec.log_norm;
      init.initial_point = x_in;
      init.final_points = finals;
      init.ansatz = spec.ansatz;
    }
    init.validate();
    auto trace = run(init, spec.beta_end, spec.dbeta, spec.options);

    int max_def = 0, min_def = std::numeric_limits<int>::max();
    double max_cond = 0.0;
    for (std::size_t i = 1; i < trace.diagnostics.size(); ++i) {
      max_def = std::max(max_def, trace.diagnostics[i].rank_deficiency);
      min_def = std::min(min_def, trace.diagnostics[i].rank_deficiency);
      max_cond = std::max(max_cond, trace.diagnostics[i].condition);
    }
    if (trace.diagnostics.size() > 1 && (max_def != expected_deficiency || min_def != expected_deficiency))
      rank_ok = false;
    json s = {{"label", flow_run.label},
              {"steps", static_cast<int>(trace.states.size()) - 1},
              {"final_beta", trace.states.back().beta},
              {"final", products_json(trace.states.back().params)},
              {"max_rank_deficiency", trace.diagnostics.size() > 1 ? max_def : 0},
              {"max_condition", max_cond}};
    s["final"]["lnZ"] = trace.states.back().log_norm;
    r.summary["runs"].push_back(s);
    const std::string name = spec.runs.size() == 1 ? "flow.csv" : "flow_" + flow_run.label + ".csv";
    r.files.push_back({name, trace_csv(trace, metadata_line(config, "flow", ctx.seed) + "\n")});
    traces.push_back(std::move(trace));
  }
  r.summary["expected_rank_deficiency"] = expected_deficiency;
  r.summary["rank_flag_consistent"] = rank_ok;

  try {
    const auto a = asymptotic_quantum_params(model);
    r.summary["asymptotic"] = {{"m_v2", a.mass_v2}, {"m_v-2", a.mass_vm2}, {"energy", a.energy}};
  } catch (const InputError&) {
  }

  // Spread across runs, sampled on the first run's trace beyond spread_from.
  if (traces.size() > 1) {
    std::vector<std::pair<std::string, std::function<double(const FlowState&)>>> fields{
        {"m", [](const FlowState& s) { return s.params.mass; }}};
    for (int k : spec.ansatz)
      fields.push_back({"v" + std::to_string(k), [k](const FlowState& s) { return s.params.potential.coefficient(k); }});
    json spread;
    for (const auto& [name, f] : fields) {
      double worst = 0.0;
      int samples = 0;
      for (const auto& st : traces.front().states) {
        if (st.beta < spec.spread_from) continue;
        ++samples;
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& t : traces) {
          if (t.states.back().beta < st.beta) continue;
          const double v = interpolate(t, st.beta, f);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        if (hi >= lo) worst = std::max(worst, hi - lo);
      }
      spread[name] = samples > 0 ? json(worst) : json(nullptr);
    }
    r.summary["spread_from"] = spec.spread_from;
    r.summary["max_spread"] = spread;
  }

  if (spec.compare_times) {
    // Global fits on the first run's boundary set against the flow trace.
    const auto& first = traces.front().states.front();
    BoundarySet bounds{{first.initial_point}, first.final_points};
    SweepOptions so;
    so.fit = spec.fit;
    so.source = spec.source;
    so.oracle = spec.oracle;
    const auto fits = sweep(model, bounds, *spec.compare_times, so);
    std::ostringstream out;
    out << std::setprecision(12) << metadata_line(config, "flow", ctx.seed) << '\n' << "beta";
    std::vector<int> ks;
    for (int k : spec.ansatz)
      if (k != 0) ks.push_back(k);
    out << ",flow_m,fit_m,diff_m";
    for (int k : ks) out << ",flow_v" << k << ",fit_v" << k << ",diff_v" << k;
    out << ",fit_converged\n";
    json maxdiff = {{"m", 0.0}};
    for (int k : ks) maxdiff["v" + std::to_string(k)] = 0.0;
    for (const auto& f : fits) {
      const double beta = f.T / hbar;
      if (beta > traces.front().states.back().beta + 1e-12 || beta < traces.front().states.front().beta - 1e-12)
        continue;
      const double fm = interpolate(traces.front(), beta, [](const FlowState& s) { return s.params.mass; });
      out << beta << ',' << fm << ',' << f.params.mass << ',' << (fm - f.params.mass);
      if (f.converged)
        maxdiff["m"] = std::max(maxdiff["m"].get<double>(), std::abs(fm - f.params.mass) / std::abs(f.params.mass));
      for (int k : ks) {
        const double fv = interpolate(traces.front(), beta, [k](const FlowState& s) { return s.params.potential.coefficient(k); });
        const double gv = f.params.potential.coefficient(k);
        out << ',' << fv << ',' << gv << ',' << (fv - gv);
        const std::string key = "v" + std::to_string(k);
        if (f.converged && gv != 0.0) maxdiff[key] = std::max(maxdiff[key].get<double>(), std::abs(fv - gv) / std::abs(gv));
      }
      out << ',' << (f.converged ? 1 : 0) << '\n';
    }
    r.files.push_back({"flow_vs_fit.csv", out.str()});
    r.summary["max_rel_diff_vs_fit"] = maxdiff;
  }
  return r;
}

// ---- verify ----

struct VerifySpec {
  double corrupt_gamma = 0.0;
  int samples = 200;
};

VerifySpec parse_verify(const json& config) {
  VerifySpec s;
  if (!config.contains("verify")) return s;
  const auto& j = config.at("verify");
  check_keys(j, {"corrupt_gamma", "samples"}, "verify");
  s.corrupt_gamma = get<double>(j, "corrupt_gamma", 0.0, "verify");
  s.samples = get<int>(j, "samples", s.samples, "verify");
  if (s.samples < 1) throw InputError("verify.samples must be positive");
  return s;
}

// Asymptotic quantum action built from a (possibly shifted) Bessel order.
ActionParams quantum_action_for_gamma(const ActionParams& model, double gamma) {
  const auto p = inverse_square_parameters(model);
  const double v2 = 0.5 * p.mass * p.mass * p.omega * p.omega;
  const double vm2 = 0.5 * p.hbar * p.hbar * (0.5 + gamma) * (0.5 + gamma);
  const double energy = p.hbar * p.omega * (1.0 + gamma);
  return make_action(1.0, PotentialSpec{{2, v2}, {-2, vm2}, {0, energy - 2.0 * std::sqrt(v2 * vm2)}}, p.hbar);
}

CommandResult cmd_verify(const json& config, const RunContext& ctx) {
  const auto model = parse_model(config);
  const auto spec = parse_verify(config);
  const auto p = inverse_square_parameters(model);
  const auto gs = ground_state(model);
  const double gamma = gamma_index(model);
  const double x0 = std::sqrt(p.hbar / (p.mass * p.omega));  // oscillator length

  CommandResult r;
  r.summary["checks"] = json::array();
  auto record = [&](const std::string& name, double measured, double tolerance) {
    const bool ok = std::isfinite(measured) && measured <= tolerance;
    r.passed = r.passed && ok;
    std::ostringstream line;
    line << (ok ? "PASS " : "FAIL ") << name << " measured=" << std::setprecision(3) << std::scientific << measured
         << " tol=" << tolerance;
    r.report.push_back(line.str());
    r.summary["checks"].push_back({{"name", name}, {"measured", measured}, {"tolerance", tolerance}, {"pass", ok}});
  };
  auto lnG = [&](double a, double b, double T) { return euclidean_log_amplitude(model, a, b, T); };
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };

  {
    std::mt19937_64 rng(ctx.seed);
    std::uniform_real_distribution<double> nu_d(1.0, 8.0), lz(std::log(0.1), std::log(100.0));
    double worst = 0.0;
    for (int i = 0; i < spec.samples; ++i) {
      const double nu = nu_d(rng), z = std::exp(lz(rng));
      const double lhs = bessel_i(nu - 1.0, z).scaled_value - bessel_i(nu + 1.0, z).scaled_value;
      worst = std::max(worst, rel(lhs, 2.0 * nu / z * bessel_i(nu, z).scaled_value));
    }
    record("bessel_recurrence", worst, 1e-9);
  }
  {
    double worst = 0.0;
    for (double a : {0.5 * x0, x0, 2.0 * x0})
      for (double b : {0.5 * x0, x0, 2.0 * x0})
        for (double t1 : {0.3, 0.7}) {
          const double t2 = 1.0 - t1;
          auto integrand = [&](double c) { return c > 0.0 ? std::exp(lnG(c, b, t2 / p.omega) + lnG(a, c, t1 / p.omega)) : 0.0; };
          const double lhs = quad::integrate_to_infinity(integrand, 0.0, 0.25 * x0, 1e-12);
          worst = std::max(worst, rel(lhs, std::exp(lnG(a, b, 1.0 / p.omega))));
        }
    record("chapman_kolmogorov", worst, 1e-6);
  }
  {
    // At the node of the first excited state the leading correction vanishes.
    const double node = x0 * std::sqrt(1.0 + gamma);
    const double e = -(lnG(node, node, 4.0 / p.omega) - lnG(node, node, 3.0 / p.omega)) * p.hbar * p.omega;
    record("feynman_kac_energy", std::abs(e - gs.energy) / gs.energy, 1e-4);
    double worst = 0.0;
    for (double a : {0.5 * x0, x0, 2.0 * x0})
      for (double b : {0.5 * x0, x0, 2.0 * x0}) {
        const double T = 8.0 / p.omega;
        worst = std::max(worst, std::abs(std::exp(lnG(a, b, T) + gs.energy * T / p.hbar -
                                                  gs.log_wavefunction(a) - gs.log_wavefunction(b)) - 1.0));
      }
    record("feynman_kac_factorisation", worst, 1e-4);
  }
  const auto q = quantum_action_for_gamma(model, gamma + spec.corrupt_gamma);
  {
    const double xm = potential_minimum(q).x_min;
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const double x = x0 * (0.3 + 4.7 * i / 49.0);
      if (std::abs(x - xm) < 0.05 * x0) continue;
      const double scale = 2.0 * p.mass * std::max(std::abs(model.potential.value(x)), gs.energy);
      worst = std::max(worst, std::abs(transformation_residual(model, q, x)) / scale);
    }
    record("transformation_residual", worst, 1e-10);
  }
  {
    const ReconstructedGroundState psi(q);
    double worst = 0.0;
    for (int i = 0; i <= 48; ++i) {
      const double x = x0 * (0.2 + 0.1 * i);
      worst = std::max(worst, std::abs(psi(x) - gs.wavefunction(x)) * std::sqrt(x0));
    }
    record("reconstruction", worst, 1e-10);
  }
  {
    const auto a = asymptotic_quantum_params(model);
    const double expected = 0.5 * p.hbar * p.hbar * std::pow(0.5 + 0.5 * std::sqrt(1.0 + 8.0 * p.mass * p.g / (p.hbar * p.hbar)), 2);
    record("asymptotic_product_m_v-2", rel(a.mass_vm2, expected), 1e-12);
    // E_gr = V~_min of the asymptotic action for m~ = 1.
    record("asymptotic_energy", rel(potential_minimum(asymptotic_quantum_action(model)).v_min, gs.energy), 1e-12);
    r.summary["asymptotic"] = {{"m_v2", a.mass_v2}, {"m_v-2", a.mass_vm2}, {"energy", a.energy}, {"gamma", gamma}};
  }
  if (p.g == 0.0) {
    double worst = 0.0;
    for (double T : {0.2, 1.0, 4.0})
      for (double a : {0.5 * x0, 2.0 * x0})
        for (double b : {0.5 * x0, 3.0 * x0}) {
          const double im = harmonic_kernel(p, b, a, T / p.omega) - harmonic_kernel(p, b, -a, T / p.omega);
          worst = std::max(worst, rel(std::exp(lnG(a, b, T / p.omega)), im));
        }
    record("image_identity", worst, 1e-10);
  }
  r.summary["passed"] = r.passed;
  r.summary["corrupt_gamma"] = spec.corrupt_gamma;
  return r;
}

// ---- scales ----

struct ScalesSpec {
  double probability = 0.95;
  std::vector<double> x;
};

ScalesSpec parse_scales(const json& config) {
  ScalesSpec s;
  if (!config.contains("scales")) return s;
  const auto& j = config.at("scales");
  check_keys(j, {"probability", "x"}, "scales");
  s.probability = get<double>(j, "probability", s.probability, "scales");
  if (!(s.probability > 0.0 && s.probability < 1.0)) throw InputError("scales.probability must lie in (0, 1)");
  if (j.contains("x")) s.x = parse_points(j.at("x"), "scales.x");
  return s;
}

CommandResult cmd_scales(const json& config, const RunContext& ctx) {
  const auto model = parse_model(config);
  const auto spec = parse_scales(config);
  const auto gs = ground_state(model);
  const auto sc = dynamical_scales(model, spec.probability);
  const auto a = asymptotic_quantum_params(model);
  CommandResult r;
  r.summary = {{"energy", gs.energy},
               {"gamma", gs.gamma_index},
               {"t_scale", sc.t_scale},
               {"length_scale", sc.length_scale},
               {"probability", spec.probability},
               {"asymptotic", {{"m_v2", a.mass_v2}, {"m_v-2", a.mass_vm2}, {"energy", a.energy}}}};
  if (!spec.x.empty()) {
    const auto q = asymptotic_quantum_action(model);
    const ReconstructedGroundState psi(q);
    std::ostringstream out;
    out << std::setprecision(12) << metadata_line(config, "scales", ctx.seed) << '\n'
        << "x,V,V_quantum,psi_gr,psi_reconstructed\n";
    for (double x : spec.x) {
      if (!model.in_domain(x)) throw InputError("scales.x outside the domain");
      out << x << ',' << model.potential.value(x) << ',' << q.potential.value(x) << ',' << gs.wavefunction(x) << ','
          << psi(x) << '\n';
    }
    r.files.push_back({"potentials.csv", out.str()});
  }
  return r;
}

}  // namespace

nlohmann::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void validate_config(const nlohmann::json& config) {
  check_keys(config, {"description", "model", "seed", "propagator", "spectrum", "fit", "flow", "verify", "scales"},
             "config");
  if (config.contains("description") && !config.at("description").is_string())
    throw InputError("config.description must be a string");
  if (config.contains("seed") && !config.at("seed").is_number_unsigned())
    throw InputError("config.seed must be a non-negative integer");
  parse_model(config);
  parse_propagator(config);
  parse_spectrum(config);
  if (config.contains("fit")) parse_fit(config);
  if (config.contains("flow")) parse_flow(config);
  parse_verify(config);
  parse_scales(config);
}

std::string config_hash(const nlohmann::json& config) {
  // nlohmann::json objects iterate in sorted key order, so dump() is canonical.
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string metadata_line(const nlohmann::json& config, const std::string& command, std::uint64_t seed) {
  return "# config_hash=" + config_hash(config) + " seed=" + std::to_string(seed) + " command=" + command;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"propagator", "spectrum", "fit", "flow", "verify", "scales"};
  return names;
}

CommandResult run_command(const std::string& command, const nlohmann::json& config, const RunContext& context) {
  validate_config(config);
  CommandResult r;
  if (command == "propagator")
    r = cmd_propagator(config, context);
  else if (command == "spectrum")
    r = cmd_spectrum(config, context);
  else if (command == "fit")
    r = cmd_fit(config, context);
  else if (command == "flow")
    r = cmd_flow(config, context);
  else if (command == "verify")
    r = cmd_verify(config, context);
  else if (command == "scales")
    r = cmd_scales(config, context);
  else
    throw InputError("unknown command '" + command + "'");
  r.summary["command"] = command;
  r.summary["config_hash"] = config_hash(config);
  r.summary["seed"] = context.seed;
  return r;
}

}  // namespace qa
