#include "gmrft/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gmrft/error.hpp"
#include "gmrft/linalg.hpp"

namespace gmrft {

double GmrfParams::l1_norm() const {
  return std::abs(theta_v) + std::abs(theta_h) + std::abs(theta_d1) + std::abs(theta_d2);
}

bool GmrfParams::is_finite() const {
  return std::isfinite(theta_v) && std::isfinite(theta_h) && std::isfinite(theta_d1) &&
         std::isfinite(theta_d2);
}

bool satisfies_l1_bound(const GmrfParams& p) {
  return p.is_finite() && p.l1_norm() < 0.5 - kDiagDominanceMargin;
}

LatticeSpec::LatticeSpec(int n) : n_(n) {
  if (n < 1) throw DimensionError("lattice side must be positive");
}

namespace {

struct Neighbour {
  int dr;
  int dc;
  enum class Kind { Vertical, Horizontal, MainDiagonal, AntiDiagonal } kind;
};

// Axis offsets first, then diagonals: for the 4×4 lattice this accumulates
// every entry in the same left-to-right order as the closed-form entries
// q1..q5, so assembly is bit-exact against them.
constexpr std::array<Neighbour, 8> kNeighbours{{
    {-1, 0, Neighbour::Kind::Vertical},
    {+1, 0, Neighbour::Kind::Vertical},
    {0, -1, Neighbour::Kind::Horizontal},
    {0, +1, Neighbour::Kind::Horizontal},
    {+1, +1, Neighbour::Kind::MainDiagonal},
    {-1, -1, Neighbour::Kind::MainDiagonal},
    {+1, -1, Neighbour::Kind::AntiDiagonal},
    {-1, +1, Neighbour::Kind::AntiDiagonal},
}};

}  // namespace

PrecisionMatrix assemble_precision(const GmrfParams& params, const LatticeSpec& lattice) {
  const int n = lattice.n();
  const int k = lattice.k();
  const double theta_b = params.theta_b();

  // Accumulated interaction weight per entry.
  Eigen::MatrixXd weight = Eigen::MatrixXd::Zero(k, k);
  for (int col = 0; col < n; ++col) {
    for (int row = 0; row < n; ++row) {
      const int site = lattice.index(row, col);
      for (const auto& nb : kNeighbours) {
        const int tr = row + nb.dr;
        const int tc = col + nb.dc;
        const bool outside = tr < 0 || tr >= n || tc < 0 || tc >= n;
        double theta = 0.0;
        switch (nb.kind) {
          case Neighbour::Kind::Vertical: theta = params.theta_v; break;
          case Neighbour::Kind::Horizontal: theta = params.theta_h; break;
          case Neighbour::Kind::MainDiagonal:
            theta = outside ? theta_b : params.theta_d2;
            break;
          case Neighbour::Kind::AntiDiagonal:
            theta = outside ? theta_b : params.theta_d1;
            break;
        }
        const int target = lattice.index(std::clamp(tr, 0, n - 1), std::clamp(tc, 0, n - 1));
        weight(site, target) += theta;
      }
    }
  }

  Eigen::MatrixXd q(k, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      q(i, j) = (i == j) ? 1.0 - weight(i, j) : -weight(i, j);
    }
  }
  return PrecisionMatrix(std::move(q), params, lattice);
}

bool is_feasible(const PrecisionMatrix& q, ConstraintMode mode) {
  const Eigen::MatrixXd& m = q.q();
  switch (mode) {
    case ConstraintMode::PositiveDefinite:
      return cholesky_upper(m).has_value();
    case ConstraintMode::DiagDominant:
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double off = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          if (j != i) off += std::abs(m(i, j));
        }
        if (!(m(i, i) > off)) return false;
      }
      return true;
  }
  return false;
}

std::vector<Eigen::VectorXd> sample_gmrf(const PrecisionMatrix& q, int count,
                                         std::uint64_t seed) {
  auto r = cholesky_upper(q.q());
  if (!r) throw InfeasibleModel("precision matrix is not positive definite");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index k = q.q().rows();
  const auto upper = r->triangularView<Eigen::Upper>();

  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int s = 0; s < count; ++s) {
    Eigen::VectorXd z(k);
    for (Eigen::Index i = 0; i < k; ++i) z(i) = normal(rng);
    out.push_back(upper.solve(z));
  }
  return out;
}

Eigen::MatrixXd synthesize_field(const GmrfParams& params, int rows, int cols, int tile,
                                 std::uint64_t seed) {
  if (tile < 2 || rows <= 0 || cols <= 0 || rows % tile != 0 || cols % tile != 0) {
    throw DimensionError("field size must be a positive multiple of the tile size");
  }
  const LatticeSpec lattice(tile);
  const auto q = assemble_precision(params, lattice);
  const int tiles_down = rows / tile;
  const int tiles_across = cols / tile;
  const auto draws = sample_gmrf(q, tiles_down * tiles_across, seed);

  Eigen::MatrixXd field(rows, cols);
  for (int ty = 0; ty < tiles_down; ++ty) {
    for (int tx = 0; tx < tiles_across; ++tx) {
      const auto& x = draws[static_cast<std::size_t>(ty * tiles_across + tx)];
      for (int c = 0; c < tile; ++c) {
        for (int r = 0; r < tile; ++r) {
          field(ty * tile + r, tx * tile + c) = x(lattice.index(r, c));
        }
      }
    }
  }
  return field;
}

}  // namespace gmrft
