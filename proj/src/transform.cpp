#include "gmrft/transform.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "gmrft/error.hpp"
#include "gmrft/linalg.hpp"

namespace gmrft {

namespace {

struct EigenBasis {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // columns
};

EigenBasis symmetric_eigen(const Eigen::MatrixXd& a, bool ascending) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw EigenFailure("eigensolver did not converge");
  EigenBasis basis{solver.eigenvalues(), solver.eigenvectors()};

  const double bound = 1e-8 * std::max(a.norm(), 1e-300);
  for (Eigen::Index i = 0; i < basis.values.size(); ++i) {
    const double residual =
        (a * basis.vectors.col(i) - basis.values(i) * basis.vectors.col(i)).norm();
    if (!(residual <= bound)) throw EigenFailure("eigenvector residual above bound");
  }
  canonicalize_eigenpairs(basis.values, basis.vectors, ascending);
  return basis;
}

Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd d(n, n);
  for (int k = 0; k < n; ++k) {
    const double alpha = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) {
      d(k, i) = alpha * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
  }
  return d;
}

}  // namespace

TransformMatrix build_gmrft(const PrecisionMatrix& q) {
  if (!is_feasible(q, ConstraintMode::PositiveDefinite)) {
    throw InfeasibleModel("precision matrix is not positive definite");
  }
  auto basis = symmetric_eigen(q.q(), /*ascending=*/true);
  return TransformMatrix(basis.vectors.transpose(),
                         {TransformSource::Kind::Gmrft, q.params()}, q.lattice());
}

TransformMatrix build_dct2d(const LatticeSpec& lattice) {
  const int n = lattice.n();
  const Eigen::MatrixXd d = dct_matrix(n);

  // (vertical, horizontal) frequency pairs in output row order.
  std::vector<std::pair<int, int>> freqs;
  for (int h = 0; h < n; ++h) {
    for (int v = 0; v < n; ++v) freqs.emplace_back(v, h);
  }
  std::stable_sort(freqs.begin(), freqs.end(), [](const auto& a, const auto& b) {
    const int sa = a.first + a.second;
    const int sb = b.first + b.second;
    return sa != sb ? sa < sb : a.first < b.first;
  });

  Eigen::MatrixXd t(lattice.k(), lattice.k());
  for (int row = 0; row < lattice.k(); ++row) {
    const auto [v, h] = freqs[static_cast<std::size_t>(row)];
    for (int c = 0; c < n; ++c) {
      for (int r = 0; r < n; ++r) t(row, lattice.index(r, c)) = d(v, r) * d(h, c);
    }
  }
  return TransformMatrix(std::move(t), {TransformSource::Kind::Dct, {}}, lattice);
}

TransformMatrix build_klt(const SampleCovariance& c) {
  auto basis = symmetric_eigen(c.c, /*ascending=*/false);
  return TransformMatrix(basis.vectors.transpose(), {TransformSource::Kind::Klt, {}},
                         c.lattice);
}

Eigen::VectorXd coefficient_variances(const TransformMatrix& t, const SampleCovariance& c) {
  const Eigen::MatrixXd tc = t.t() * c.c;
  return tc.cwiseProduct(t.t()).rowwise().sum();
}

double energy_compaction(const TransformMatrix& t, const SampleCovariance& c, int m) {
  const double trace = c.c.trace();
  if (trace == 0.0) return 1.0;
  Eigen::VectorXd var = coefficient_variances(t, c);
  std::vector<double> sorted(var.data(), var.data() + var.size());
  const auto take = static_cast<std::size_t>(std::clamp<Eigen::Index>(m, 0, var.size()));
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(take),
                    sorted.end(), std::greater<>());
  double top = 0.0;
  for (std::size_t i = 0; i < take; ++i) top += sorted[i];
  return top / trace;
}

double high_rate_cost(const TransformMatrix& t, const SampleCovariance& c) {
  const Eigen::VectorXd var = coefficient_variances(t, c);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (!(var(i) > 0.0)) return std::numeric_limits<double>::infinity();
    sum += std::log(var(i));
  }
  return sum / static_cast<double>(var.size());
}

double high_rate_distortion(const TransformMatrix& t, const SampleCovariance& c, double rate) {
  const double k = t.lattice().k();
  return std::sqrt(3.0) * std::numbers::pi / 2.0 * k * std::exp2(-2.0 * rate) *
         std::exp(high_rate_cost(t, c));
}

double coding_gain_db(const TransformMatrix& t, const SampleCovariance& c) {
  const double trace = c.c.trace();
  if (trace == 0.0) return 0.0;
  const double k = static_cast<double>(c.c.rows());
  return 10.0 * (std::log10(trace / k) - high_rate_cost(t, c) / std::numbers::ln10);
}

}  // namespace gmrft
