#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qaction/fit.hpp"
#include "qaction/flow.hpp"
#include "qaction/parallel.hpp"

using namespace qa;

TEST_CASE("for_each_index visits every index once") {
  for (auto exec : {Execution::Serial, Execution::Parallel}) {
    std::vector<int> hits(1000, 0);
    for_each_index(1000, [&](int i) { hits[i] += 1; }, exec);
    for (int h : hits) CHECK(h == 1);
  }
  for_each_index(0, [](int) { throw std::logic_error("never called"); }, Execution::Parallel);
}

TEST_CASE("the exception from the lowest index wins") {
  for (auto exec : {Execution::Serial, Execution::Parallel}) {
    try {
      for_each_index(
          64,
          [](int i) {
            if (i == 17 || i == 40) throw std::runtime_error(std::to_string(i));
          },
          exec);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "17");
    }
  }
}

TEST_CASE("thread limit round trip") {
  set_thread_limit(2);
  CHECK(thread_limit() == 2);
  set_thread_limit(0);
  CHECK(thread_limit() >= 1);
}

TEST_CASE("serial and parallel kernels are bit-identical") {
  const auto model = inverse_square_model(1.0, 1.0, 1.0);
  const auto bounds = BoundarySet::uniform(1.5, 2.5, 4, 1.1, 2.1, 5);
  const auto ts = build_table(model, bounds, 0.7, AmplitudeSource::Analytic, nullptr, Execution::Serial);
  const auto tp = build_table(model, bounds, 0.7, AmplitudeSource::Analytic, nullptr, Execution::Parallel);
  CHECK(ts.log_values == tp.log_values);
  CHECK(ts.log_time_derivatives == tp.log_time_derivatives);

  FitOptions serial, parallel;
  serial.exec = Execution::Serial;
  parallel.exec = Execution::Parallel;
  const auto init = restrict_to_ansatz(model, serial.ansatz);
  const auto es = evaluate_fit(ts, init, serial);
  const auto ep = evaluate_fit(ts, init, parallel);
  CHECK(es.objective == ep.objective);
  CHECK(es.actions == ep.actions);

  FlowState s;
  s.beta = 0.5;
  s.params = make_action(1.0, PotentialSpec{{0, 1.1}, {2, 0.5}, {-2, 1.2}});
  s.initial_point = 5.0;
  for (int i = 0; i < 8; ++i) s.final_points.push_back(0.5 + 0.3 * i);
  FlowOptions fs, fp;
  fs.classical = fp.classical = model;
  fs.exec = Execution::Serial;
  fp.exec = Execution::Parallel;
  const auto as = assemble_system(s, fs), ap = assemble_system(s, fp);
  CHECK(as.A == ap.A);
  CHECK(as.r == ap.r);
}
