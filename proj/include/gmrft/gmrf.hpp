#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace gmrft {

/// Spatial interactions of the 2nd-order homogeneous field.
///
/// theta_v couples vertical neighbours (row offset ±1), theta_h horizontal
/// ones (column offset ±1), theta_d2 the main diagonal (+1,+1)/(−1,−1) and
/// theta_d1 the anti-diagonal (+1,−1)/(−1,+1). Interactions that cross the
/// lattice boundary along a diagonal use theta_b(), the mean of the two
/// diagonal parameters, so that the precision matrix stays symmetric.
struct GmrfParams {
  double theta_v = 0.0;
  double theta_h = 0.0;
  double theta_d1 = 0.0;
  double theta_d2 = 0.0;

  double theta_b() const { return (theta_d1 + theta_d2) / 2.0; }
  double l1_norm() const;
  bool is_finite() const;

  std::array<double, 4> as_array() const { return {theta_v, theta_h, theta_d1, theta_d2}; }
  static GmrfParams from_array(const std::array<double, 4>& a) {
    return {a[0], a[1], a[2], a[3]};
  }

  friend bool operator==(const GmrfParams&, const GmrfParams&) = default;
};

/// Margin below 1/2 that the ℓ1 norm must respect under DiagDominant.
inline constexpr double kDiagDominanceMargin = 1e-6;

/// True when |θ_v|+|θ_h|+|θ_d1|+|θ_d2| < 1/2 − kDiagDominanceMargin. This
/// makes Q(θ) diagonally dominant, hence positive definite, at every size.
bool satisfies_l1_bound(const GmrfParams& p);

/// Square N×N lattice; sites are vectorized column-major.
class LatticeSpec {
 public:
  explicit LatticeSpec(int n);

  int n() const { return n_; }
  int k() const { return n_ * n_; }
  /// 0-based (row, col) to vector index.
  int index(int row, int col) const { return col * n_ + row; }
  int row_of(int index) const { return index % n_; }
  int col_of(int index) const { return index / n_; }

  friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;

 private:
  int n_;
};

enum class ConstraintMode { PositiveDefinite, DiagDominant };

class PrecisionMatrix {
 public:
  PrecisionMatrix(Eigen::MatrixXd q, GmrfParams params, LatticeSpec lattice)
      : q_(std::move(q)), params_(params), lattice_(lattice) {}

  const Eigen::MatrixXd& q() const { return q_; }
  const GmrfParams& params() const { return params_; }
  const LatticeSpec& lattice() const { return lattice_; }

 private:
  Eigen::MatrixXd q_;
  GmrfParams params_;
  LatticeSpec lattice_;
};

/// Assembles Q(θ) for the lattice with asymmetric Neumann boundaries.
///
/// Every site starts with diagonal 1. For each of the 8 neighbour offsets the
/// target site is clamped coordinate-wise into the lattice; the interaction
/// (θ_b instead of a diagonal parameter when the target was outside) is
/// accumulated onto entry (site, clamped target). Off-diagonal entries are
/// the negated accumulated sums, diagonal entries 1 minus the sum of the
/// interactions that folded back onto the site itself.
PrecisionMatrix assemble_precision(const GmrfParams& params, const LatticeSpec& lattice);

bool is_feasible(const PrecisionMatrix& q, ConstraintMode mode);

/// Draws `count` zero-mean vectors with covariance Q⁻¹ by back-substituting
/// standard normals through the upper Cholesky factor. Throws InfeasibleModel
/// if Q is not positive definite.
std::vector<Eigen::VectorXd> sample_gmrf(const PrecisionMatrix& q, int count,
                                         std::uint64_t seed);

/// A rows×cols field made of independent tile×tile GMRF draws laid out in
/// raster order. Each tile is filled from its column-major sample vector.
Eigen::MatrixXd synthesize_field(const GmrfParams& params, int rows, int cols, int tile,
                                 std::uint64_t seed);

}  // namespace gmrft
