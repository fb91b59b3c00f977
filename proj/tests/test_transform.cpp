#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gmrft/error.hpp"
#include "gmrft/linalg.hpp"
#include "gmrft/transform.hpp"
#include "oracles.hpp"

using namespace gmrft;

namespace {

double orthonormality_error(const Eigen::MatrixXd& t) {
  return (t * t.transpose() - Eigen::MatrixXd::Identity(t.rows(), t.rows())).cwiseAbs().maxCoeff();
}

void expect_sign_convention(const Eigen::MatrixXd& t) {
  for (int r = 0; r < t.rows(); ++r) {
    for (int c = 0; c < t.cols(); ++c) {
      if (std::abs(t(r, c)) > 1e-10) {
        EXPECT_GT(t(r, c), 0.0) << "row " << r;
        break;
      }
    }
  }
}

SampleCovariance random_psd(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(n * n, n * n + 3);
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j) g(i, j) = nd(rng);
  return {g * g.transpose() / static_cast<double>(g.cols()), LatticeSpec(n)};
}

TransformMatrix raw(const Eigen::MatrixXd& t, int n) { return {t, {}, LatticeSpec(n)}; }

}  // namespace

TEST(Cholesky, FactorsSpdAndRejectsIndefinite) {
  std::mt19937_64 rng(1);
  const auto c = random_psd(rng, 3);
  const auto r = cholesky_upper(c.c);
  ASSERT_TRUE(r.has_value());
  EXPECT_LT((r->transpose() * *r - c.c).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  oracle::jacobi_eigen(c.c, values, vectors);
  EXPECT_NEAR(log_det_from_cholesky(*r), values.array().log().sum(), 1e-9);

  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(3, 3);
  bad(2, 2) = -1.0;
  EXPECT_FALSE(cholesky_upper(bad).has_value());
  bad(2, 2) = 1e-13;
  EXPECT_FALSE(cholesky_upper(bad).has_value());
}

TEST(Canonicalize, OrdersTiesLexicographically) {
  Eigen::VectorXd values(3);
  values << 2.0, 1.0, 2.0;
  Eigen::MatrixXd vectors(3, 3);
  vectors.col(0) = Eigen::Vector3d(0, 0, -1);
  vectors.col(1) = Eigen::Vector3d(0, 1, 0);
  vectors.col(2) = Eigen::Vector3d(-1, 0, 0);
  canonicalize_eigenpairs(values, vectors, true);
  EXPECT_EQ(values, Eigen::Vector3d(1, 2, 2));
  EXPECT_EQ(Eigen::Vector3d(vectors.col(0)), Eigen::Vector3d(0, 1, 0));
  // Equal eigenvalues: sign-normalized vectors in ascending lexicographic order.
  EXPECT_EQ(Eigen::Vector3d(vectors.col(1)), Eigen::Vector3d(0, 0, 1));
  EXPECT_EQ(Eigen::Vector3d(vectors.col(2)), Eigen::Vector3d(1, 0, 0));
}

TEST(Gmrft, IdentityPrecision) {
  const PrecisionMatrix q(Eigen::MatrixXd::Identity(16, 16), {}, LatticeSpec(4));
  const auto t = build_gmrft(q);
  EXPECT_LE(orthonormality_error(t.t()), 1e-12);
  EXPECT_LE((q.q() * t.t().transpose() - t.t().transpose()).norm(), 1e-12);
}

TEST(Gmrft, EigenResidualOrderAndSigns) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const GmrfParams p = oracle::random_theta(rng, 0.45);
    for (int n : {4, 8}) {
      const auto q = assemble_precision(p, LatticeSpec(n));
      const auto t = build_gmrft(q);
      EXPECT_LE(orthonormality_error(t.t()), 1e-8);
      expect_sign_convention(t.t());
      Eigen::VectorXd oracle_values;
      Eigen::MatrixXd oracle_vectors;
      oracle::jacobi_eigen(q.q(), oracle_values, oracle_vectors);
      for (int k = 0; k < t.t().rows(); ++k) {
        const Eigen::VectorXd v = t.t().row(k).transpose();
        const double lambda = v.dot(q.q() * v);
        EXPECT_LE((q.q() * v - lambda * v).norm(), 1e-8 * q.q().norm());
        EXPECT_NEAR(lambda, oracle_values(k), 1e-10);
      }
    }
  }
}

TEST(Gmrft, InfeasibleThrows) {
  EXPECT_THROW(build_gmrft(assemble_precision({0.6, 0, 0, 0}, LatticeSpec(4))), InfeasibleModel);
}

TEST(Gmrft, FirstRowHasLargestVariance) {
  const auto q = assemble_precision({0.2, 0.1, 0.08, -0.06}, LatticeSpec(4));
  const auto t = build_gmrft(q);
  const SampleCovariance c{oracle::inverse(q.q()), LatticeSpec(4)};
  const Eigen::VectorXd var = coefficient_variances(t, c);
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  oracle::jacobi_eigen(c.c, values, vectors);
  EXPECT_NEAR(var(0), values.maxCoeff(), 1e-10);
  EXPECT_EQ(var(0), var.maxCoeff());
  for (int k = 1; k < var.size(); ++k) EXPECT_LE(var(k), var(k - 1) + 1e-12);
}

TEST(Gmrft, DctDiagonalizesDiagonallySymmetricModel) {
  const auto q = assemble_precision({0.2, 0.1, 0.05, 0.05}, LatticeSpec(8));
  const Eigen::MatrixXd d = build_dct2d(LatticeSpec(8)).t();
  const Eigen::MatrixXd m = d * q.q() * d.transpose();
  const double off = (m - Eigen::MatrixXd(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff();
  EXPECT_LE(off, 1e-10);
}

TEST(Gmrft, ScalingPrecisionKeepsTransform) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = assemble_precision(oracle::random_theta(rng, 0.45), LatticeSpec(4));
    const auto a = build_gmrft(q);
    const auto b = build_gmrft(PrecisionMatrix(3.5 * q.q(), q.params(), q.lattice()));
    EXPECT_LE((a.t() - b.t()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Gmrft, Deterministic) {
  const auto q = assemble_precision({0.2, 0.15, 0.1, -0.05}, LatticeSpec(8));
  EXPECT_EQ(build_gmrft(q).t(), build_gmrft(q).t());
}

TEST(Dct, SizeOneIsScalarOne) {
  const auto t = build_dct2d(LatticeSpec(1));
  ASSERT_EQ(t.t().rows(), 1);
  EXPECT_DOUBLE_EQ(t.t()(0, 0), 1.0);
}

TEST(Dct, OrthonormalAndDcRow) {
  EXPECT_LE(orthonormality_error(build_dct2d(LatticeSpec(4)).t()), 1e-12);
  const auto t8 = build_dct2d(LatticeSpec(8));
  for (int k = 0; k < 64; ++k) EXPECT_NEAR(t8.t()(0, k), 1.0 / 8.0, 1e-15);
}

TEST(Dct, RowOrderByFrequencySum) {
  const int n = 4;
  const auto t = build_dct2d(LatticeSpec(n));
  // Reference: separable cosines, enumerated directly.
  std::vector<std::pair<int, int>> freqs;
  for (int s = 0; s <= 2 * (n - 1); ++s)
    for (int v = 0; v < n; ++v)
      if (s - v >= 0 && s - v < n) freqs.emplace_back(v, s - v);
  ASSERT_EQ(freqs.size(), 16u);
  auto basis = [&](int f, int x) {
    const double a = f == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    return a * std::cos(M_PI * (2 * x + 1) * f / (2.0 * n));
  };
  for (int k = 0; k < 16; ++k) {
    const auto [v, h] = freqs[static_cast<std::size_t>(k)];
    for (int c = 0; c < n; ++c)
      for (int r = 0; r < n; ++r)
        EXPECT_NEAR(t.t()(k, c * n + r), basis(v, r) * basis(h, c), 1e-14) << k;
  }
}

TEST(Klt, IdentityCovariance) {
  const SampleCovariance c{Eigen::MatrixXd::Identity(16, 16), LatticeSpec(4)};
  const auto t = build_klt(c);
  EXPECT_LE(orthonormality_error(t.t()), 1e-12);
  EXPECT_LE((coefficient_variances(t, c).array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Klt, DominantAxis) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(4, 4);
  c(0, 0) = 4.0;
  const auto t = build_klt({c, LatticeSpec(2)});
  EXPECT_EQ(t.t().row(0), Eigen::RowVector4d(1, 0, 0, 0));
}

TEST(Klt, VariancesAreSortedEigenvalues) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_psd(rng, 4);
    const auto t = build_klt(c);
    expect_sign_convention(t.t());
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    oracle::jacobi_eigen(c.c, values, vectors);
    const Eigen::VectorXd var = coefficient_variances(t, c);
    for (int k = 0; k < 16; ++k) EXPECT_NEAR(var(k), values(15 - k), 1e-9);
  }
}

TEST(Metrics, EnergyCompaction) {
  std::mt19937_64 rng(5);
  const SampleCovariance eye{Eigen::MatrixXd::Identity(16, 16), LatticeSpec(4)};
  const auto q = raw(oracle::random_orthonormal(rng, 16), 4);
  EXPECT_NEAR(energy_compaction(q, eye, 8), 0.5, 1e-12);
  const auto c = random_psd(rng, 4);
  EXPECT_NEAR(energy_compaction(q, c, 16), 1.0, 1e-12);
  const SampleCovariance zero{Eigen::MatrixXd::Zero(16, 16), LatticeSpec(4)};
  EXPECT_EQ(energy_compaction(q, zero, 3), 1.0);
}

TEST(Metrics, KltCompactsAtLeastAsWellAsDct) {
  const auto q = assemble_precision({0.25, 0.05, 0.15, -0.1}, LatticeSpec(8));
  const auto draws = sample_gmrf(q, 400, 8);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(64, 64);
  for (const auto& d : draws) acc += d * d.transpose();
  const SampleCovariance c{acc / 400.0, LatticeSpec(8)};
  EXPECT_GE(energy_compaction(build_klt(c), c, 8), energy_compaction(build_dct2d(LatticeSpec(8)), c, 8));
}

TEST(Metrics, TracePreserved) {
  std::mt19937_64 rng(6);
  const auto c = random_psd(rng, 4);
  for (const auto& t : {build_klt(c), build_dct2d(LatticeSpec(4)), raw(oracle::random_orthonormal(rng, 16), 4)}) {
    EXPECT_NEAR(coefficient_variances(t, c).sum(), c.c.trace(), 1e-9 * c.c.trace());
  }
}

TEST(Metrics, HighRateCost) {
  const SampleCovariance eye{Eigen::MatrixXd::Identity(16, 16), LatticeSpec(4)};
  EXPECT_NEAR(high_rate_cost(build_dct2d(LatticeSpec(4)), eye), 0.0, 1e-14);
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Identity(2, 2);
  d2(0, 0) = 4.0;
  const TransformMatrix t2(Eigen::MatrixXd::Identity(2, 2), {}, LatticeSpec(1));
  EXPECT_NEAR(high_rate_cost(t2, {d2, LatticeSpec(1)}), std::log(2.0), 1e-15);
  Eigen::MatrixXd singular = Eigen::MatrixXd::Identity(2, 2);
  singular(1, 1) = 0.0;
  EXPECT_TRUE(std::isinf(high_rate_cost(t2, {singular, LatticeSpec(1)})));
}

TEST(Metrics, KltMinimizesHighRateCost) {
  std::mt19937_64 rng(7);
  const auto c = random_psd(rng, 4);
  const double best = high_rate_cost(build_klt(c), c);
  for (int trial = 0; trial < 50; ++trial) {
    EXPECT_LE(best, high_rate_cost(raw(oracle::random_orthonormal(rng, 16), 4), c) + 1e-12);
  }
}

TEST(Metrics, HighRateDistortionScalesWithRate) {
  std::mt19937_64 rng(8);
  const auto c = random_psd(rng, 4);
  const auto t = build_klt(c);
  const double d0 = high_rate_distortion(t, c, 0.0);
  EXPECT_NEAR(high_rate_distortion(t, c, 1.0), d0 / 4.0, 1e-12 * d0);
  EXPECT_NEAR(d0, std::sqrt(3.0) * M_PI / 2.0 * 16.0 * std::exp(high_rate_cost(t, c)), 1e-9 * d0);
}

TEST(Metrics, CodingGain) {
  std::mt19937_64 rng(9);
  const SampleCovariance white{Eigen::MatrixXd::Identity(16, 16) * 3.0, LatticeSpec(4)};
  EXPECT_NEAR(coding_gain_db(raw(oracle::random_orthonormal(rng, 16), 4), white), 0.0, 1e-12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_psd(rng, 4);
    EXPECT_GE(coding_gain_db(build_klt(c), c), coding_gain_db(build_dct2d(LatticeSpec(4)), c) - 1e-12);
  }
  const SampleCovariance zero{Eigen::MatrixXd::Zero(16, 16), LatticeSpec(4)};
  EXPECT_EQ(coding_gain_db(build_dct2d(LatticeSpec(4)), zero), 0.0);
}

TEST(Metrics, GmrftBeatsDctOnAsymmetricModel) {
  const auto q = assemble_precision({0.2, 0.1, 0.15, -0.1}, LatticeSpec(8));
  const SampleCovariance c{oracle::inverse(q.q()), LatticeSpec(8)};
  EXPECT_GT(coding_gain_db(build_gmrft(q), c), coding_gain_db(build_dct2d(LatticeSpec(8)), c));
}
