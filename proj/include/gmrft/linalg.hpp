#pragma once

#include <optional>

#include <Eigen/Dense>

namespace gmrft {

/// Smallest Cholesky pivot accepted as "positive".
inline constexpr double kPivotTolerance = 1e-12;

/// Upper Cholesky factor R with Rᵀ·R = a, or nullopt when some pivot is
/// <= kPivotTolerance. Only the upper triangle of `a` is read.
std::optional<Eigen::MatrixXd> cholesky_upper(const Eigen::MatrixXd& a);

/// log det of the matrix factored by `r` (twice the sum of log pivots).
double log_det_from_cholesky(const Eigen::MatrixXd& r);

/// Flips every column so that its first entry with magnitude > 1e-10 is
/// positive.
void normalize_column_signs(Eigen::MatrixXd& vectors);

/// Sorts eigenpairs (columns of `vectors`) by eigenvalue, ascending or
/// descending, applies the sign convention, and orders vectors inside runs of
/// equal eigenvalues lexicographically. Two eigenvalues are treated as equal
/// when they differ by at most 1e-12 times the largest magnitude.
void canonicalize_eigenpairs(Eigen::VectorXd& values, Eigen::MatrixXd& vectors,
                             bool ascending);

}  // namespace gmrft
