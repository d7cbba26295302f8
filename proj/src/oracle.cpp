#include "qaction/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <lapacke.h>

namespace qa {

SpatialGrid SpatialGrid::uniform(double x_min, double x_max, double spacing) {
  if (!(spacing > 0.0)) throw InputError("grid spacing must be positive");
  if (!(x_max > x_min)) throw InputError("grid needs x_min < x_max");
  const long n = std::lround((x_max - x_min) / spacing) + 1;
  if (n < 100) throw InputError("spatial grid needs at least 100 points");
  if (n > 50'000'000) throw InputError("spatial grid too large");
  SpatialGrid g{x_min, 0.0, static_cast<int>(n), spacing};
  g.x_max = g.node(g.n_points - 1);
  return g;
}

SpatialGrid SpatialGrid::default_for(const ActionParams& model, double spacing, double length) {
  if (model.domain == Domain::HalfLine) return uniform(spacing, length, spacing);
  return uniform(-length, length, spacing);
}

void SpatialGrid::validate(const ActionParams& model) const {
  if (n_points < 100) throw InputError("spatial grid needs at least 100 points");
  if (!(x_max > x_min)) throw InputError("grid needs x_min < x_max");
  if (model.domain == Domain::HalfLine && !(x_min > 0.0))
    throw InputError("half-line grid must start at x_min > 0");
}

TridiagonalOperator discretize(const ActionParams& model, const SpatialGrid& grid) {
  model.validate();
  grid.validate(model);
  const double kinetic = model.hbar * model.hbar / (2.0 * model.mass * grid.spacing * grid.spacing);
  TridiagonalOperator op{grid, model.hbar, std::vector<double>(grid.n_points),
                         std::vector<double>(grid.n_points - 1, -kinetic)};
  for (int i = 0; i < grid.n_points; ++i)
    op.diagonal[i] = 2.0 * kinetic + model.potential.value(grid.node(i));
  return op;
}

namespace {

std::vector<double> eigenvalues_below(const TridiagonalOperator& op, double upper) {
  std::vector<double> d = op.diagonal, e = op.off_diagonal;
  e.push_back(0.0);
  const lapack_int n = static_cast<lapack_int>(d.size());
  std::vector<double> w(n);
  std::vector<lapack_int> isuppz(2 * n);
  lapack_int found = 0;
  double dummy = 0.0;
  const double lower = -std::numeric_limits<double>::max();
  const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'N', 'V', n, d.data(), e.data(), lower,
                                         upper, 0, 0, 0.0, &found, w.data(), &dummy, 1, isuppz.data());
  if (info != 0) throw NumericalError("tridiagonal eigenvalue count failed (info " + std::to_string(info) + ")");
  w.resize(found);
  return w;
}

}  // namespace

SpectralDecomposition spectrum(const TridiagonalOperator& op, int n_states) {
  const int n = op.grid.n_points;
  if (n_states < 1 || n_states > n) throw InputError("requested state count outside [1, n_points]");
  std::vector<double> d = op.diagonal, e = op.off_diagonal;
  e.push_back(0.0);
  std::vector<double> w(n);
  std::vector<double> z(static_cast<std::size_t>(n) * n_states);
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n_states));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', n, d.data(), e.data(), 0.0, 0.0,
                                         1, n_states, 0.0, &found, w.data(), z.data(), n, isuppz.data());
  if (info != 0 || found != n_states)
    throw NumericalError("tridiagonal eigen-solve failed (info " + std::to_string(info) + ")");

  SpectralDecomposition out{op.grid, op.hbar, std::vector<double>(w.begin(), w.begin() + n_states),
                            std::move(z)};
  const double inv_sqrt_h = 1.0 / std::sqrt(op.grid.spacing);
  for (int s = 0; s < n_states; ++s) {
    double* col = out.vectors.data() + static_cast<std::size_t>(s) * n;
    // Fix the sign: first component above 1e-8 of the column maximum is positive.
    double peak = 0.0;
    for (int i = 0; i < n; ++i) peak = std::max(peak, std::abs(col[i]));
    double sign = 1.0;
    for (int i = 0; i < n; ++i)
      if (std::abs(col[i]) > 1e-8 * peak) {
        sign = col[i] > 0.0 ? 1.0 : -1.0;
        break;
      }
    for (int i = 0; i < n; ++i) col[i] *= sign * inv_sqrt_h;
  }
  return out;
}

SpectralDecomposition spectrum_for_time(const TridiagonalOperator& op, double t_min, int min_states) {
  if (!(t_min > 0.0)) throw InputError("t_min must be positive");
  const auto ground = spectrum(op, 1);
  const double cutoff = ground.energies[0] + op.hbar * 28.0 / t_min;
  const int count = static_cast<int>(eigenvalues_below(op, cutoff).size());
  return spectrum(op, std::clamp(std::max(count + 1, min_states), 1, op.grid.n_points));
}

double SpectralDecomposition::psi_at(int n, double x) const {
  const double s = (x - grid.x_min) / grid.spacing;
  const double nearest = std::round(s);
  if (std::abs(s - nearest) < 1e-9) {
    const int i = static_cast<int>(nearest);
    if (i >= 0 && i < grid.n_points) return psi(n, i);
  }
  if (s < -1.0 || s > grid.n_points) throw InputError("interpolation point outside the spatial grid");
  // Four-point Lagrange stencil; nodes beyond the ends carry the Dirichlet zero.
  int i0 = static_cast<int>(std::floor(s)) - 1;
  auto value = [&](int i) { return (i < 0 || i >= grid.n_points) ? 0.0 : psi(n, i); };
  double result = 0.0;
  for (int j = 0; j < 4; ++j) {
    double basis = 1.0;
    for (int k = 0; k < 4; ++k)
      if (k != j) basis *= (s - (i0 + k)) / static_cast<double>(j - k);
    result += basis * value(i0 + j);
  }
  return result;
}

double min_resolved_time(const SpectralDecomposition& decomp) {
  const double gap = decomp.energies.back() - decomp.energies.front();
  if (!(gap > 0.0)) return std::numeric_limits<double>::infinity();
  return decomp.hbar * 12.0 * std::numbers::ln10 / gap;
}

namespace {

void check_resolved(const SpectralDecomposition& decomp, double T) {
  if (!(T > 0.0)) throw InputError("transition time must be positive");
  if (T < min_resolved_time(decomp)) {
    const double need = decomp.energies.front() + decomp.hbar * 12.0 * std::numbers::ln10 / T;
    throw NumericalError("spectral truncation too coarse for T = " + std::to_string(T) +
                         ": states up to E = " + std::to_string(need) + " are required, have " +
                         std::to_string(decomp.n_states()) + " states up to E = " +
                         std::to_string(decomp.energies.back()));
  }
}

}  // namespace

double amplitude(const SpectralDecomposition& decomp, double a, double b, double T) {
  check_resolved(decomp, T);
  double sum = 0.0;
  for (int n = 0; n < decomp.n_states(); ++n)
    sum += decomp.psi_at(n, a) * decomp.psi_at(n, b) * std::exp(-decomp.energies[n] * T / decomp.hbar);
  return sum;
}

double amplitude_time_derivative(const SpectralDecomposition& decomp, double a, double b, double T) {
  check_resolved(decomp, T);
  double sum = 0.0;
  for (int n = 0; n < decomp.n_states(); ++n) {
    const double e = decomp.energies[n];
    sum -= e / decomp.hbar * decomp.psi_at(n, a) * decomp.psi_at(n, b) * std::exp(-e * T / decomp.hbar);
  }
  return sum;
}

SpectralOracle::SpectralOracle(const ActionParams& model, const Options& options)
    : fine_(spectrum_for_time(
          discretize(model, SpatialGrid::default_for(model,
                                                     options.extrapolate ? 0.5 * options.spacing
                                                                         : options.spacing,
                                                     options.length)),
          options.t_min)) {
  if (options.extrapolate)
    coarse_ = spectrum_for_time(
        discretize(model, SpatialGrid::default_for(model, options.spacing, options.length)),
        options.t_min);
}

double SpectralOracle::amplitude(double a, double b, double T) const {
  const double fine = qa::amplitude(fine_, a, b, T);
  if (!coarse_) return fine;
  return (4.0 * fine - qa::amplitude(*coarse_, a, b, T)) / 3.0;
}

double SpectralOracle::log_amplitude(double a, double b, double T) const {
  const double g = amplitude(a, b, T);
  if (!(g > 0.0)) throw NumericalError("oracle amplitude is not positive (truncation or grid too coarse)");
  return std::log(g);
}

double SpectralOracle::log_amplitude_time_derivative(double a, double b, double T) const {
  double dg = amplitude_time_derivative(fine_, a, b, T);
  if (coarse_) dg = (4.0 * dg - amplitude_time_derivative(*coarse_, a, b, T)) / 3.0;
  return dg / amplitude(a, b, T);
}

double SpectralOracle::ground_energy() const {
  if (!coarse_) return fine_.energies.front();
  return (4.0 * fine_.energies.front() - coarse_->energies.front()) / 3.0;
}

std::string spectrum_csv(const SpectralDecomposition& decomp) {
  std::ostringstream out;
  out.precision(17);
  out << "n,E_n\n";
  for (int n = 0; n < decomp.n_states(); ++n) out << n << ',' << decomp.energies[n] << '\n';
  return out.str();
}

}  // namespace qa
