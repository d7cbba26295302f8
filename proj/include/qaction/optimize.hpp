#pragma once

#include <functional>
#include <vector>

namespace qa {

struct NelderMeadOptions {
  // Stop when every vertex lies within this distance of the best one, in
  // coordinates scaled by `scale`.
  double relative_diameter = 1e-10;
  int max_evaluations = 50'000;
  double initial_step = 0.05;
  // Fresh simplices built around the optimum after the first convergence.
  int restarts = 2;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value;
  int evaluations;
  int iterations;
  bool converged;
};

// Derivative-free simplex minimisation. Non-finite objective values mark a
// point as invalid; such vertices are never accepted.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x0, const std::vector<double>& scale,
                             const NelderMeadOptions& options = {});

}  // namespace qa
