#pragma once

#include <Eigen/Dense>

#include "gmrft/gmrf.hpp"

namespace gmrft {

struct TransformSource {
  enum class Kind { Gmrft, Dct, Klt };
  Kind kind = Kind::Dct;
  GmrfParams params{};  // meaningful for Gmrft only
};

/// K×K orthonormal analysis transform; row k is the k-th basis vector and
/// rows are ordered by decreasing expected coefficient variance.
class TransformMatrix {
 public:
  TransformMatrix(Eigen::MatrixXd t, TransformSource source, LatticeSpec lattice)
      : t_(std::move(t)), source_(source), lattice_(lattice) {}

  const Eigen::MatrixXd& t() const { return t_; }
  const TransformSource& source() const { return source_; }
  const LatticeSpec& lattice() const { return lattice_; }

 private:
  Eigen::MatrixXd t_;
  TransformSource source_;
  LatticeSpec lattice_;
};

struct SampleCovariance {
  Eigen::MatrixXd c;
  LatticeSpec lattice;
};

/// Rows are the eigenvectors of Q ordered by ascending eigenvalue, i.e. by
/// descending variance under Q⁻¹.
TransformMatrix build_gmrft(const PrecisionMatrix& q);

/// Separable orthonormal 2D DCT-II for column-major vectorized blocks, rows
/// ordered by ascending (vertical + horizontal) frequency, ties by vertical
/// frequency.
TransformMatrix build_dct2d(const LatticeSpec& lattice);

/// Eigenvectors of the covariance, descending eigenvalue order.
TransformMatrix build_klt(const SampleCovariance& c);

/// diag(T·C·Tᵀ).
Eigen::VectorXd coefficient_variances(const TransformMatrix& t, const SampleCovariance& c);

/// Share of trace(C) captured by the m largest coefficient variances; 1 when
/// trace(C) is zero.
double energy_compaction(const TransformMatrix& t, const SampleCovariance& c, int m);

/// Mean log coefficient variance, the R-independent part of the high-rate
/// distortion (√3π/2)·K·2^(−2R)·(∏ σ²ₖ)^(1/K). +∞ if any variance is <= 0.
double high_rate_cost(const TransformMatrix& t, const SampleCovariance& c);

/// The full high-rate MSE for rate R bits per coefficient.
double high_rate_distortion(const TransformMatrix& t, const SampleCovariance& c, double rate);

/// Transform coding gain in dB; 0 when trace(C) is zero.
double coding_gain_db(const TransformMatrix& t, const SampleCovariance& c);

}  // namespace gmrft
