#include "gmrft/estimation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "gmrft/error.hpp"
#include "gmrft/linalg.hpp"
#include "gmrft/optimize.hpp"

namespace gmrft {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_power_of_two(Eigen::Index v) {
  return v > 0 && std::has_single_bit(static_cast<unsigned long>(v));
}

// Objective values are compared on a 2^-34 grid so that rounding noise in
// the covariance (e.g. from rescaling it) does not steer the search.
double snap(double f) {
  if (!std::isfinite(f)) return f;
  return std::ldexp(std::nearbyint(std::ldexp(f, 34)), -34);
}

Point4 to_point(const GmrfParams& p) { return p.as_array(); }
GmrfParams to_params(const Point4& x) { return GmrfParams::from_array(x); }

class FitProblem {
 public:
  FitProblem(const SampleCovariance& c, const EstimationConfig& cfg)
      : cfg_(cfg), lattice_(c.lattice), normalized_{c.c, c.lattice} {
    const double trace = c.c.trace();
    if (!(trace > 0.0)) throw DegenerateBlock("covariance has zero trace");
    // Trace-normalized and rounded to a 2^-36 grid, so c and any positive
    // multiple of it give bit-identical problems.
    const double s = static_cast<double>(lattice_.k()) / trace;
    normalized_.c = c.c.unaryExpr([s](double v) { return std::ldexp(std::nearbyint(std::ldexp(v * s, 36)), -36); });
  }

  double likelihood_cost(const GmrfParams& p) const {
    if (!p.is_finite() || !admissible_without_pd(p)) return kInf;
    return negative_profile_likelihood(p, normalized_);
  }

  double coding_cost(const GmrfParams& p) const {
    if (!p.is_finite() || !admissible_without_pd(p)) return kInf;
    const auto q = assemble_precision(p, lattice_);
    if (!is_feasible(q, ConstraintMode::PositiveDefinite)) return kInf;
    return high_rate_cost(build_gmrft(q), normalized_);
  }

  const LatticeSpec& lattice() const { return lattice_; }
  const EstimationConfig& cfg() const { return cfg_; }

 private:
  bool admissible_without_pd(const GmrfParams& p) const {
    if (cfg_.nonnegative && (p.theta_v < 0 || p.theta_h < 0 || p.theta_d1 < 0 || p.theta_d2 < 0)) {
      return false;
    }
    return cfg_.constraint != ConstraintMode::DiagDominant || satisfies_l1_bound(p);
  }

  EstimationConfig cfg_;
  LatticeSpec lattice_;
  SampleCovariance normalized_;
};

// Uniform draw from the ℓ1 ball of the given radius (positive orthant only
// when `nonnegative`): normalized exponential spacings with random signs.
GmrfParams random_start(std::mt19937_64& rng, double radius, bool nonnegative) {
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution coin(0.5);
  std::array<double, 5> e{};
  double total = 0.0;
  for (double& v : e) {
    v = expo(rng);
    total += v;
  }
  Point4 x{};
  for (int i = 0; i < 4; ++i) {
    const bool negative = coin(rng);
    x[i] = radius * e[i] / total * ((negative && !nonnegative) ? -1.0 : 1.0);
  }
  return to_params(x);
}

struct SearchResult {
  GmrfParams params;
  double value = kInf;
};

SearchResult multistart(const std::function<double(const GmrfParams&)>& cost,
                        const std::vector<GmrfParams>& starts, const EstimationConfig& cfg,
                        const FitObserver& observer) {
  const std::function<double(const Point4&)> objective = [&](const Point4& x) {
    const GmrfParams p = to_params(x);
    const double f = cost(p);
    if (observer && std::isfinite(f)) observer(p, f);
    return snap(f);
  };
  NelderMeadOptions options;
  options.max_evals = cfg.max_iters;
  options.ftol = cfg.tol;

  SearchResult best;
  for (const auto& start : starts) {
    const auto r = nelder_mead(objective, to_point(start), options);
    if (r.f < best.value) best = {to_params(r.x), r.f};
  }
  return best;
}

std::vector<GmrfParams> random_starts(const EstimationConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<GmrfParams> starts;
  for (int s = 0; s < std::max(cfg.starts, 1); ++s) {
    starts.push_back(random_start(rng, 0.4, cfg.nonnegative));
  }
  return starts;
}

// Scale α maximizing the likelihood of α·θ within the admissible interval.
double best_ray_scale(const FitProblem& problem, const GmrfParams& theta) {
  const auto q = assemble_precision(theta, problem.lattice());
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(q.q().rows(), q.q().cols()) - q.q();
  const Eigen::VectorXd mu = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                                 a, Eigen::EigenvaluesOnly)
                                 .eigenvalues();
  // Q(α·θ) = I − α·A is positive definite iff 1 − α·μᵢ > 0 for every i.
  double lo = -1e6;
  double hi = 1e6;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (mu(i) > 1e-15) hi = std::min(hi, 1.0 / mu(i));
    if (mu(i) < -1e-15) lo = std::max(lo, 1.0 / mu(i));
  }
  if (problem.cfg().constraint == ConstraintMode::DiagDominant) {
    const double l1 = theta.l1_norm();
    if (l1 > 0) {
      const double bound = (0.5 - kDiagDominanceMargin) / l1;
      lo = std::max(lo, -bound);
      hi = std::min(hi, bound);
    }
  }
  if (problem.cfg().nonnegative) lo = std::max(lo, 0.0);

  auto scaled = [&](double alpha) {
    auto x = theta.as_array();
    for (double& v : x) v *= alpha;
    return GmrfParams::from_array(x);
  };
  auto value = [&](double alpha) { return snap(problem.likelihood_cost(scaled(alpha))); };

  constexpr int kGrid = 128;
  double best_alpha = 1.0;
  double best_value = value(1.0);
  const double width = hi - lo;
  for (int i = 1; i < kGrid; ++i) {
    const double alpha = lo + width * i / kGrid;
    const double v = value(alpha);
    if (v < best_value) {
      best_value = v;
      best_alpha = alpha;
    }
  }

  // Golden-section refinement around the best grid point.
  double left = std::max(lo, best_alpha - width / kGrid);
  double right = std::min(hi, best_alpha + width / kGrid);
  constexpr double kGolden = 0.6180339887498949;
  double x1 = right - kGolden * (right - left);
  double x2 = left + kGolden * (right - left);
  double f1 = value(x1);
  double f2 = value(x2);
  for (int it = 0; it < 60 && right - left > 1e-12; ++it) {
    if (f1 < f2) {
      right = x2;
      x2 = x1;
      f2 = f1;
      x1 = right - kGolden * (right - left);
      f1 = value(x1);
    } else {
      left = x1;
      x1 = x2;
      f1 = f2;
      x2 = left + kGolden * (right - left);
      f2 = value(x2);
    }
  }
  const double refined = f1 < f2 ? x1 : x2;
  if (std::min(f1, f2) < best_value) best_alpha = refined;
  return best_alpha;
}

}  // namespace

Macroblock::Macroblock(Eigen::MatrixXd pixels, int n) : pixels_(std::move(pixels)), n_(n) {
  if (pixels_.rows() != pixels_.cols()) throw DimensionError("macroblock must be square");
  if (!is_power_of_two(pixels_.rows()) || !is_power_of_two(n) || n > pixels_.rows()) {
    throw DimensionError("macroblock and block sizes must be powers of two with n <= L");
  }
  if (!pixels_.allFinite()) throw DimensionError("macroblock contains non-finite pixels");
}

SampleCovariance estimate_covariance(const Macroblock& mb) {
  const Eigen::MatrixXd& px = mb.pixels();
  const int l = mb.l();
  const int n = mb.n();
  if (px.maxCoeff() == px.minCoeff()) throw DegenerateBlock("constant macroblock");

  const Eigen::MatrixXd x = px.array() - px.mean();

  // chat(s, t) for s in [0, n) and t in (−n, n); negative s by symmetry.
  const int span = 2 * n - 1;
  std::vector<double> chat(static_cast<std::size_t>(n * span), 0.0);
  for (int s = 0; s < n; ++s) {
    for (int t = -(n - 1); t <= n - 1; ++t) {
      double sum = 0.0;
      const int c0 = std::max(0, -t);
      const int c1 = std::min(l, l - t);
      for (int c = c0; c < c1; ++c) {
        for (int r = 0; r + s < l; ++r) sum += x(r, c) * x(r + s, c + t);
      }
      const double pairs = static_cast<double>(l - s) * static_cast<double>(l - std::abs(t));
      chat[static_cast<std::size_t>(s * span + t + n - 1)] = sum / pairs;
    }
  }
  auto lookup = [&](int s, int t) {
    if (s < 0) {
      s = -s;
      t = -t;
    }
    return chat[static_cast<std::size_t>(s * span + t + n - 1)];
  };

  const LatticeSpec lattice(n);
  const int k = lattice.k();
  Eigen::MatrixXd c(k, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      c(i, j) = lookup(lattice.row_of(j) - lattice.row_of(i), lattice.col_of(j) - lattice.col_of(i));
    }
  }

  const double trace = c.trace();
  if (!(trace > 0.0)) throw DegenerateBlock("macroblock has zero variance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(c);
  if (solver.info() == Eigen::Success && solver.eigenvalues().minCoeff() < -1e-10 * trace) {
    const Eigen::VectorXd clamped = solver.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd projected =
        solver.eigenvectors() * clamped.asDiagonal() * solver.eigenvectors().transpose();
    for (int j = 0; j < k; ++j) {
      for (int i = j + 1; i < k; ++i) projected(i, j) = projected(j, i);
    }
    c = std::move(projected);
  }
  return {std::move(c), lattice};
}

double negative_profile_likelihood(const GmrfParams& params, const SampleCovariance& c) {
  const auto q = assemble_precision(params, c.lattice);
  const auto r = cholesky_upper(q.q());
  if (!r) return kInf;
  const double trace_cq = c.c.cwiseProduct(q.q()).sum();
  if (!(trace_cq > 0.0)) return kInf;
  const double k = static_cast<double>(c.lattice.k());
  return -(log_det_from_cholesky(*r) - k * std::log(trace_cq));
}

GmrfParams fit_parameters(const SampleCovariance& c, const EstimationConfig& cfg,
                          const FitObserver& observer) {
  if (cfg.starts < 1 || !(cfg.tol > 0.0)) throw Error("invalid estimation config");
  const FitProblem problem(c, cfg);

  EstimationConfig ml_cfg = cfg;
  ml_cfg.objective = Objective::MaxLikelihood;
  const FitProblem ml_problem(c, ml_cfg);
  auto ml_cost = [&](const GmrfParams& p) { return ml_problem.likelihood_cost(p); };

  if (cfg.objective == Objective::MaxLikelihood) {
    const auto best = multistart(ml_cost, random_starts(cfg), cfg, observer);
    if (!std::isfinite(best.value)) throw NoFeasiblePoint("no start converged to a feasible point");
    return best.params;
  }

  // Coding-optimized: warm start from the ML estimate, then random starts.
  std::vector<GmrfParams> starts;
  const auto ml = multistart(ml_cost, random_starts(cfg), cfg, {});
  if (std::isfinite(ml.value)) starts.push_back(ml.params);
  for (const auto& s : random_starts(cfg)) starts.push_back(s);

  auto tc_cost = [&](const GmrfParams& p) { return problem.coding_cost(p); };
  auto best = multistart(tc_cost, starts, cfg, observer);

  // J_TC is rugged, so local searches over the full set can end worse than
  // the same search confined to the nonnegative orthant. That orthant is a
  // subset of the free set; its fit is a candidate too.
  if (!cfg.nonnegative) {
    EstimationConfig plus = cfg;
    plus.nonnegative = true;
    try {
      const GmrfParams p = fit_parameters(c, plus, observer);
      if (const double f = snap(problem.coding_cost(p)); f < best.value) best = {p, f};
    } catch (const NoFeasiblePoint&) {
    }
  }
  if (!std::isfinite(best.value)) throw NoFeasiblePoint("no start converged to a feasible point");

  const double alpha = best_ray_scale(problem, best.params);
  if (alpha == 1.0) return best.params;
  auto x = best.params.as_array();
  for (double& v : x) v *= alpha;
  const GmrfParams moved = GmrfParams::from_array(x);
  const double moved_cost = problem.coding_cost(moved);
  const double best_raw = problem.coding_cost(best.params);
  if (std::isfinite(moved_cost) && moved_cost <= best_raw + 1e-12 * (1.0 + std::abs(best_raw))) {
    if (observer) observer(moved, moved_cost);
    return moved;
  }
  return best.params;
}

}  // namespace gmrft
