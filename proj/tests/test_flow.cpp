#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "qaction/analytic.hpp"
#include "qaction/flow.hpp"

using namespace qa;

namespace {

ActionParams harmonic() { return make_action(1.0, PotentialSpec{{2, 0.5}}); }
ActionParams quartic() { return make_action(1.0, PotentialSpec{{2, 1.0}, {4, 0.01}}); }

// Oscillator at beta: the classical action with ln Z~ = -1/2 ln(2 pi sinh beta).
FlowState harmonic_state(double beta) {
  FlowState s;
  s.beta = beta;
  s.params = make_action(1.0, PotentialSpec{{0, 0.3}, {2, 0.5}});
  s.log_norm = -0.5 * std::log(2.0 * std::numbers::pi * std::sinh(beta));
  s.initial_point = 0.7;
  for (int i = 0; i < 8; ++i) s.final_points.push_back(-1.5 + 0.4 * i);
  s.ansatz = {0, 2};
  return s;
}

FlowState inverse_square_state() {
  FlowState s;
  s.beta = 0.5;
  s.params = make_action(0.99, PotentialSpec{{0, 1.1}, {2, 0.5}, {-2, 1.2}});
  s.initial_point = 5.0;
  for (int i = 0; i < 10; ++i) s.final_points.push_back(0.4 + 0.35 * i);
  return s;
}

FlowOptions options_for(const ActionParams& classical) {
  FlowOptions o;
  o.classical = classical;
  return o;
}

// Quartic state close to the quantum action at beta = 0.5.
FlowState quartic_state() {
  FlowState s;
  s.beta = 0.5;
  s.params = make_action(1.0, PotentialSpec{{0, 0.2}, {2, 1.0}, {4, 0.01}});
  s.initial_point = 1.0;
  for (int i = 0; i < 12; ++i) s.final_points.push_back(-2.0 + 4.0 * i / 11.0);
  s.ansatz = {0, 2, 4};
  return s;
}

}  // namespace

TEST_CASE("the oscillator action does not flow") {
  for (double beta : {0.5, 1.0, 2.0}) {
    const auto s = harmonic_state(beta);
    const auto o = options_for(harmonic());
    const auto sol = solve_system(assemble_system(s, o), s, o);
    INFO("beta=" << beta);
    CHECK(std::abs(sol.rate(1)) < 1e-4);  // m~
    CHECK(std::abs(sol.rate(3)) < 1e-4);  // v~2
    // -d ln Z~/d beta + beta d v~0/d beta = (1/2) coth beta - v~0, since
    // d Sigma~/d beta carries the constant v~0.
    CHECK(std::abs(sol.combination - (0.5 / std::tanh(beta) - 0.3)) < 1e-4);
    CHECK(sol.rank_deficiency == 1);
  }
}

TEST_CASE("degenerate columns are -1 and beta") {
  const auto s = inverse_square_state();
  const auto o = options_for(inverse_square_model(1.0, 1.0, 1.0));
  const auto sys = assemble_system(s, o);
  // Unknowns: ln Z~, m~, v~-2, v~0, v~2.
  for (int j = 0; j < sys.A.rows(); ++j) {
    CHECK(sys.A(j, 0) == -1.0);
    CHECK(std::abs(sys.A(j, 3) - s.beta) <= 1e-12);
  }
  const auto sol = solve_system(sys, s, o);
  CHECK(sol.rank == 4);
  CHECK(sol.rank_deficiency == 1);
}

TEST_CASE("minimum-norm and pinned-energy solutions share the invariant combination") {
  const auto s = inverse_square_state();
  auto o = options_for(inverse_square_model(1.0, 1.0, 1.0));
  const auto sys = assemble_system(s, o);
  const auto a = solve_system(sys, s, o);
  o.degeneracy = Degeneracy::PinnedEnergy;
  const auto b = solve_system(sys, s, o);
  CHECK(b.rank_deficiency == 0);
  CHECK(std::abs(a.combination - b.combination) <= 1e-10 * std::max(1.0, std::abs(a.combination)));
  // Only the degenerate pair may differ; it moves along (-1, beta).
  CHECK(std::abs(a.rate(1) - b.rate(1)) <= 1e-10 * std::max(1.0, std::abs(a.rate(1))));
  CHECK(std::abs(a.rate(2) - b.rate(2)) <= 1e-10 * std::max(1.0, std::abs(a.rate(2))));
  CHECK(std::abs(a.rate(4) - b.rate(4)) <= 1e-10 * std::max(1.0, std::abs(a.rate(4))));
  CHECK(std::abs(a.residual_norm - b.residual_norm) <= 1e-10 * std::max(1.0, a.residual_norm));
}

TEST_CASE("duplicating every final point leaves the solution unchanged") {
  auto s = inverse_square_state();
  const auto o = options_for(inverse_square_model(1.0, 1.0, 1.0));
  const auto a = solve_system(assemble_system(s, o), s, o);
  const auto finals = s.final_points;
  s.final_points.insert(s.final_points.end(), finals.begin(), finals.end());
  const auto b = solve_system(assemble_system(s, o), s, o);
  for (int c = 0; c < a.rate.size(); ++c) CHECK(std::abs(a.rate(c) - b.rate(c)) <= 1e-6 * std::max(1.0, std::abs(a.rate(c))));
}

TEST_CASE("envelope and finite-difference time derivatives agree") {
  const auto s = inverse_square_state();
  auto o = options_for(inverse_square_model(1.0, 1.0, 1.0));
  o.segments = 400;
  const auto a = assemble_system(s, o);
  o.time_derivative = TimeDerivative::FiniteDifference;
  const auto b = assemble_system(s, o);
  for (int j = 0; j < a.r.size(); ++j)
    CHECK(std::abs(a.rows[j].d_time - b.rows[j].d_time) <= 1e-6 * std::max(1.0, std::abs(a.rows[j].d_time)));
}

TEST_CASE("zero-length steps and runs") {
  const auto s = inverse_square_state();
  const auto o = options_for(inverse_square_model(1.0, 1.0, 1.0));
  const auto same = rk4_step(s, 0.0, o);
  CHECK(same.params == s.params);
  CHECK(same.beta == s.beta);
  const auto trace = run(s, s.beta, 0.01, o);
  CHECK(trace.states.size() == 1);
  CHECK(trace_csv(trace).find("beta,m,v-6") == 0);
  CHECK_THROWS_AS(run(s, s.beta - 0.1, 0.01, o), InputError);
  CHECK_THROWS_AS(run(s, s.beta + 0.1, 0.0, o), InputError);
}

TEST_CASE("invalid flow states") {
  auto s = inverse_square_state();
  s.final_points.resize(5);
  CHECK_THROWS_AS(s.validate(), InputError);
  s = inverse_square_state();
  s.final_points[0] = -1.0;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = inverse_square_state();
  s.ansatz = {0, 2, 2};
  CHECK_THROWS_AS(s.validate(), InputError);
}

TEST_CASE("RK4 converges at fourth order") {
  // Fixed segments so only the step in beta changes; the ratio of successive
  // differences tends to 16 (about 18 at these steps, 25 at dbeta = 0.25).
  const auto s = quartic_state();
  auto o = options_for(quartic());
  o.segments = 600;
  std::vector<FlowState> ends;
  for (double h : {0.0625, 0.03125, 0.015625}) ends.push_back(run(s, 1.0, h, o).states.back());
  auto ratio = [&](auto f) { return (f(ends[0]) - f(ends[1])) / (f(ends[1]) - f(ends[2])); };
  const double rm = ratio([](const FlowState& x) { return x.params.mass; });
  const double rv = ratio([](const FlowState& x) { return x.params.potential.coefficient(2); });
  INFO("mass ratio=" << rm << " v2 ratio=" << rv);
  CHECK(rm >= 12.0);
  CHECK(rm <= 20.0);
  CHECK(rv >= 12.0);
  CHECK(rv <= 20.0);
}

TEST_CASE("trace stride") {
  const auto s = quartic_state();
  auto o = options_for(quartic());
  o.stride = 3;
  const auto trace = run(s, 0.5 + 7 * 0.02, 0.02, o);
  // Initial state, steps 3 and 6, and the final step.
  REQUIRE(trace.states.size() == 4);
  CHECK(trace.states.back().beta == doctest::Approx(0.64));
  CHECK(trace.diagnostics[1].rank_deficiency == 1);
  CHECK(trace.diagnostics[1].dbeta == doctest::Approx(0.02));
}
