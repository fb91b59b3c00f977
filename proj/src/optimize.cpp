#include "gmrft/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gmrft {

namespace {

constexpr int kDim = 4;
constexpr int kVertices = kDim + 1;

Point4 affine(const Point4& base, const Point4& toward, double t) {
  Point4 out{};
  for (int i = 0; i < kDim; ++i) out[i] = base[i] + t * (toward[i] - base[i]);
  return out;
}

class Simplex {
 public:
  Simplex(const std::function<double(const Point4&)>& objective, int budget)
      : objective_(objective), budget_(budget) {}

  double eval(const Point4& x) {
    ++evals_;
    const double f = objective_(x);
    return std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
  }

  bool exhausted() const { return evals_ >= budget_; }
  int evals() const { return evals_; }

  void build(const Point4& x0, double f0, double step) {
    x_[0] = x0;
    f_[0] = f0;
    for (int i = 0; i < kDim; ++i) {
      double h = step;
      Point4 candidate = x0;
      double fc = std::numeric_limits<double>::infinity();
      for (int attempt = 0; attempt < 8 && !std::isfinite(fc) && !exhausted(); ++attempt) {
        for (double sign : {1.0, -1.0}) {
          candidate = x0;
          candidate[i] += sign * h;
          fc = eval(candidate);
          if (std::isfinite(fc) || exhausted()) break;
        }
        h *= 0.5;
      }
      x_[i + 1] = candidate;
      f_[i + 1] = fc;
    }
    order();
  }

  // Runs until the value spread criterion holds or the budget is spent.
  void run(double ftol) {
    while (!exhausted()) {
      const double fbest = f_[idx_[0]];
      const double fworst = f_[idx_[kDim]];
      if (std::isfinite(fworst) && fworst - fbest <= ftol * (1.0 + std::abs(fbest))) return;
      if (diameter() < 1e-14) return;
      step();
    }
  }

  const Point4& best() const { return x_[idx_[0]]; }
  double best_value() const { return f_[idx_[0]]; }

 private:
  void order() {
    std::iota(idx_.begin(), idx_.end(), 0);
    std::stable_sort(idx_.begin(), idx_.end(), [&](int a, int b) { return f_[a] < f_[b]; });
  }

  double diameter() const {
    double d = 0.0;
    for (int v = 1; v < kVertices; ++v) {
      for (int i = 0; i < kDim; ++i) {
        d = std::max(d, std::abs(x_[idx_[v]][i] - x_[idx_[0]][i]));
      }
    }
    return d;
  }

  void replace_worst(const Point4& x, double f) {
    x_[idx_[kDim]] = x;
    f_[idx_[kDim]] = f;
    order();
  }

  void step() {
    const int worst = idx_[kDim];
    Point4 centroid{};
    for (int v = 0; v < kDim; ++v) {
      for (int i = 0; i < kDim; ++i) centroid[i] += x_[idx_[v]][i] / kDim;
    }
    const double fbest = f_[idx_[0]];
    const double fsecond = f_[idx_[kDim - 1]];
    const double fworst = f_[worst];

    const Point4 xr = affine(centroid, x_[worst], -1.0);
    const double fr = eval(xr);
    if (fr < fbest) {
      const Point4 xe = affine(centroid, x_[worst], -2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        replace_worst(xe, fe);
      } else {
        replace_worst(xr, fr);
      }
      return;
    }
    if (fr < fsecond) {
      replace_worst(xr, fr);
      return;
    }
    if (fr < fworst) {
      const Point4 xc = affine(centroid, xr, 0.5);
      const double fc = eval(xc);
      if (fc <= fr) {
        replace_worst(xc, fc);
        return;
      }
    } else {
      const Point4 xc = affine(centroid, x_[worst], 0.5);
      const double fc = eval(xc);
      if (fc < fworst) {
        replace_worst(xc, fc);
        return;
      }
    }
    shrink();
  }

  void shrink() {
    const Point4 best = x_[idx_[0]];
    for (int v = 1; v < kVertices && !exhausted(); ++v) {
      const int i = idx_[v];
      x_[i] = affine(best, x_[i], 0.5);
      f_[i] = eval(x_[i]);
    }
    order();
  }

  const std::function<double(const Point4&)>& objective_;
  int budget_;
  int evals_ = 0;
  std::array<Point4, kVertices> x_{};
  std::array<double, kVertices> f_{};
  std::array<int, kVertices> idx_{};
};

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Point4&)>& objective,
                             const Point4& x0, const NelderMeadOptions& options) {
  Simplex simplex(objective, options.max_evals);
  const double f0 = simplex.eval(x0);
  simplex.build(x0, f0, options.step);
  simplex.run(options.ftol);

  double step = options.step;
  for (int r = 0; r < options.restarts && !simplex.exhausted(); ++r) {
    const Point4 start = simplex.best();
    const double fstart = simplex.best_value();
    step *= 0.25;
    simplex.build(start, fstart, step);
    simplex.run(options.ftol);
    if (!(simplex.best_value() < fstart - options.ftol * (1.0 + std::abs(fstart)))) break;
  }
  return {simplex.best(), simplex.best_value(), simplex.evals()};
}

}  // namespace gmrft
