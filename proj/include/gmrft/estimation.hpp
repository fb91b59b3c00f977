#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "gmrft/gmrf.hpp"
#include "gmrft/transform.hpp"

namespace gmrft {

/// L×L image region whose n×n transform blocks share one model.
class Macroblock {
 public:
  /// Throws DimensionError unless pixels are square, L and n are powers of
  /// two with n <= L, and all values are finite.
  Macroblock(Eigen::MatrixXd pixels, int n);

  const Eigen::MatrixXd& pixels() const { return pixels_; }
  int l() const { return static_cast<int>(pixels_.rows()); }
  int n() const { return n_; }

 private:
  Eigen::MatrixXd pixels_;
  int n_;
};

enum class Objective { MaxLikelihood, CodingOptimized };

struct EstimationConfig {
  Objective objective = Objective::CodingOptimized;
  ConstraintMode constraint = ConstraintMode::DiagDominant;
  bool nonnegative = false;
  int starts = 5;
  int max_iters = 2000;
  double tol = 1e-8;
  std::uint64_t seed = 1;
};

/// Displacement-invariant covariance of the n×n blocks of a macroblock, from
/// mean-removed pixel pairs, normalized by the pair count of each
/// displacement. Throws DegenerateBlock for a constant macroblock.
SampleCovariance estimate_covariance(const Macroblock& mb);

/// Called with every evaluated feasible candidate and its objective value
/// (high_rate_cost for CodingOptimized, the negated profile log-likelihood for
/// MaxLikelihood).
using FitObserver = std::function<void(const GmrfParams&, double)>;

/// Fits θ to the covariance by multi-start Nelder–Mead.
///
/// MaxLikelihood maximizes log det Q(θ) − K·log tr(C·Q(θ)), the Gaussian
/// likelihood with the free overall precision scale profiled out. It equals
/// log det Q − tr(C·Q) up to a constant when that scale is 1.
///
/// CodingOptimized minimizes high_rate_cost of the GMRFT at θ. That cost is
/// constant along each ray {α·θ} because Q(α·θ) = (1−α)·I + α·Q(θ) has the
/// same eigenvectors, so the search is warm-started from the ML estimate and
/// the final point is moved along its ray to the likelihood maximum; the
/// move is kept only if the cost stays within 1e-12 of the best visited.
GmrfParams fit_parameters(const SampleCovariance& c, const EstimationConfig& cfg,
                          const FitObserver& observer = {});

/// Negated profile log-likelihood; +∞ when Q(θ) is not positive definite.
double negative_profile_likelihood(const GmrfParams& params, const SampleCovariance& c);

}  // namespace gmrft
