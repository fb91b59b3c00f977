#pragma once

#include <array>
#include <functional>

namespace gmrft {

using Point4 = std::array<double, 4>;

struct NelderMeadOptions {
  int max_evals = 2000;
  /// Converged when the simplex value spread is <= ftol·(1 + |f_best|).
  double ftol = 1e-8;
  /// Initial edge length of the simplex.
  double step = 0.05;
  /// Fresh simplices built around the best point after convergence.
  int restarts = 2;
};

struct NelderMeadResult {
  Point4 x{};
  double f = 0.0;
  int evals = 0;
};

/// Derivative-free minimization in four dimensions. The objective may return
/// +∞ to reject a point; `x0` must have a finite value. Decisions depend only
/// on comparisons, so the result is a deterministic function of the sequence
/// of objective values.
NelderMeadResult nelder_mead(const std::function<double(const Point4&)>& objective,
                             const Point4& x0, const NelderMeadOptions& options);

}  // namespace gmrft
