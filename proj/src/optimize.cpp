#include "qaction/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qaction/errors.hpp"

namespace qa {

namespace {

struct Simplex {
  std::vector<std::vector<double>> y;  // scaled coordinates
  std::vector<double> f;
};

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             const std::vector<double>& x0, const std::vector<double>& scale,
                             const NelderMeadOptions& options) {
  const std::size_t n = x0.size();
  if (n == 0) throw InputError("nothing to optimise");
  if (scale.size() != n) throw InputError("scale vector has the wrong length");
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = std::abs(scale[i]) > 0.0 ? std::abs(scale[i]) : 1.0;

  int evaluations = 0, iterations = 0;
  auto eval = [&](const std::vector<double>& y) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] * s[i];
    ++evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<double> best(n);
  for (std::size_t i = 0; i < n; ++i) best[i] = x0[i] / s[i];
  double best_f = eval(best);
  bool converged = false;

  for (int round = 0; round <= options.restarts; ++round) {
    Simplex sx;
    sx.y.assign(n + 1, best);
    sx.f.assign(n + 1, best_f);
    for (std::size_t i = 0; i < n; ++i) {
      const double step = options.initial_step * (round == 0 ? 1.0 : 0.1);
      sx.y[i + 1][i] += best[i] != 0.0 ? step * std::abs(best[i]) : step;
      sx.f[i + 1] = eval(sx.y[i + 1]);
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    bool round_converged = false;
    while (evaluations < options.max_evaluations) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sx.f[a] < sx.f[b]; });
      const auto& lo = sx.y[order[0]];
      double diameter = 0.0;
      for (std::size_t v = 1; v <= n; ++v)
        for (std::size_t i = 0; i < n; ++i) diameter = std::max(diameter, std::abs(sx.y[order[v]][i] - lo[i]));
      if (diameter < options.relative_diameter && std::isfinite(sx.f[order[0]])) {
        round_converged = true;
        break;
      }
      ++iterations;
      const std::size_t hi = order[n], second = order[n - 1];
      std::fill(centroid.begin(), centroid.end(), 0.0);
      for (std::size_t v = 0; v < n; ++v)
        for (std::size_t i = 0; i < n; ++i) centroid[i] += sx.y[order[v]][i] / static_cast<double>(n);

      auto point = [&](double t, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) out[i] = centroid[i] + t * (sx.y[hi][i] - centroid[i]);
      };
      point(-1.0, trial);
      const double fr = eval(trial);
      if (fr < sx.f[order[0]]) {
        point(-2.0, trial2);
        const double fe = eval(trial2);
        if (fe < fr) {
          sx.y[hi] = trial2;
          sx.f[hi] = fe;
        } else {
          sx.y[hi] = trial;
          sx.f[hi] = fr;
        }
        continue;
      }
      if (fr < sx.f[second]) {
        sx.y[hi] = trial;
        sx.f[hi] = fr;
        continue;
      }
      // Outside or inside contraction.
      const bool outside = fr < sx.f[hi];
      point(outside ? -0.5 : 0.5, trial2);
      const double fc = eval(trial2);
      if (fc < (outside ? fr : sx.f[hi])) {
        sx.y[hi] = trial2;
        sx.f[hi] = fc;
        continue;
      }
      // Shrink toward the best vertex.
      for (std::size_t v = 1; v <= n; ++v) {
        auto& y = sx.y[order[v]];
        for (std::size_t i = 0; i < n; ++i) y[i] = lo[i] + 0.5 * (y[i] - lo[i]);
        sx.f[order[v]] = eval(y);
      }
    }

    const auto it = std::min_element(sx.f.begin(), sx.f.end());
    const std::size_t ib = static_cast<std::size_t>(it - sx.f.begin());
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) moved = std::max(moved, std::abs(sx.y[ib][i] - best[i]));
    if (*it <= best_f) {
      best = sx.y[ib];
      best_f = *it;
    }
    converged = round_converged;
    // A restart that lands where it started confirms the optimum.
    if (!round_converged || (round > 0 && moved < 10.0 * options.relative_diameter)) break;
  }

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = best[i] * s[i];
  return {std::move(x), best_f, evaluations, iterations, converged};
}

}  // namespace qa
