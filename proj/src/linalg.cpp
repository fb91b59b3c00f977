#include "gmrft/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace gmrft {

std::optional<Eigen::MatrixXd> cholesky_upper(const Eigen::MatrixXd& a) {
  const Eigen::Index k = a.rows();
  // The factor stays inside the band of the upper triangle, so the loops
  // only visit it; skipped terms are exact zeros.
  Eigen::Index band = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < j - band; ++i) {
      if (a(i, j) != 0.0) {
        band = j - i;
        break;
      }
    }
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index first = std::max<Eigen::Index>(0, j - band);
    double pivot = a(j, j);
    for (Eigen::Index p = first; p < j; ++p) pivot -= r(p, j) * r(p, j);
    if (!(pivot > kPivotTolerance)) return std::nullopt;
    const double diag = std::sqrt(pivot);
    r(j, j) = diag;
    const Eigen::Index last = std::min(k, j + band + 1);
    for (Eigen::Index i = j + 1; i < last; ++i) {
      double v = a(j, i);
      for (Eigen::Index p = std::max(first, i - band); p < j; ++p) v -= r(p, j) * r(p, i);
      r(j, i) = v / diag;
    }
  }
  return r;
}

double log_det_from_cholesky(const Eigen::MatrixXd& r) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) s += std::log(r(i, i));
  return 2.0 * s;
}

void normalize_column_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double v = vectors(r, c);
      if (std::abs(v) > 1e-10) {
        if (v < 0) vectors.col(c) = -vectors.col(c);
        break;
      }
    }
  }
}

void canonicalize_eigenpairs(Eigen::VectorXd& values, Eigen::MatrixXd& vectors,
                             bool ascending) {
  const Eigen::Index k = values.size();
  normalize_column_signs(vectors);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return ascending ? values(a) < values(b) : values(a) > values(b);
  });

  const double scale = k > 0 ? values.cwiseAbs().maxCoeff() : 0.0;
  const double tie = 1e-12 * std::max(scale, 1e-300);
  auto lex_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      if (vectors(r, a) != vectors(r, b)) return vectors(r, a) < vectors(r, b);
    }
    return false;
  };
  std::size_t begin = 0;
  while (begin < order.size()) {
    std::size_t end = begin + 1;
    while (end < order.size() &&
           std::abs(values(order[end]) - values(order[begin])) <= tie) {
      ++end;
    }
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(begin),
              order.begin() + static_cast<std::ptrdiff_t>(end), lex_less);
    begin = end;
  }

  Eigen::VectorXd sorted_values(k);
  Eigen::MatrixXd sorted_vectors(vectors.rows(), k);
  for (Eigen::Index i = 0; i < k; ++i) {
    sorted_values(i) = values(order[static_cast<std::size_t>(i)]);
    sorted_vectors.col(i) = vectors.col(order[static_cast<std::size_t>(i)]);
  }
  values = std::move(sorted_values);
  vectors = std::move(sorted_vectors);
}

}  // namespace gmrft
