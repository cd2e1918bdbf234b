#include <gtest/gtest.h>

#include "hetlmm/errors.hpp"
#include "hetlmm/proxy.hpp"
#include "test_util.hpp"

using namespace hetlmm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST(Proxy, ZeroDesignIsIdentity) {
  const MatrixXd Z = MatrixXd::Zero(3, 2);
  const auto f = factor_proxy(Z, 1.0);
  EXPECT_EQ(f.rank(), 0);
  const VectorXd v = VectorXd::LinSpaced(3, 1, 3);
  EXPECT_TRUE(apply_inv(f, v).isApprox(v));
  EXPECT_TRUE(apply_inv_sqrt(f, v).isApprox(v));
  EXPECT_DOUBLE_EQ(trace_inv(factor_proxy(MatrixXd::Zero(7, 4), 2.0)), 7.0);
}

TEST(Proxy, SingleColumnHandOracle) {
  MatrixXd z(3, 1);
  z << 2, 0, 0;  // |z|^2 = 4
  const auto f = factor_proxy(z, 1.0);
  ASSERT_EQ(f.rank(), 1);
  EXPECT_NEAR(f.eigvals()(0), 4.0, 1e-12);
  EXPECT_TRUE(apply_inv(f, VectorXd(z.col(0))).isApprox(z.col(0) / 5.0, 1e-12));
}

TEST(Proxy, SpectralCases) {
  MatrixXd z(2, 1);
  z << 1, 0;  // eigval 1
  EXPECT_NEAR(trace_inv(factor_proxy(z, 1.0)), 1.5, 1e-14);
  MatrixXd z3(3, 1);
  z3 << std::sqrt(3.0), 0, 0;  // eigval 3
  const VectorXd v = VectorXd::Unit(3, 0);
  EXPECT_TRUE(apply_inv_sqrt(factor_proxy(z3, 1.0), v).isApprox(v / 2.0, 1e-12));
}

TEST(Proxy, ReconstructionAndOrthonormality) {
  rng::CounterRng gen(3, {1});
  const MatrixXd Z = gen.normal_matrix(4, 6);
  const auto f = factor_proxy(Z, 0.5);
  const MatrixXd dense = 0.5 * Z * Z.transpose() + MatrixXd::Identity(4, 4);
  EXPECT_LT((f.dense() - dense).norm() / dense.norm(), 1e-8);
  const MatrixXd U = f.eigvecs();
  EXPECT_LT((U.transpose() * U - MatrixXd::Identity(f.rank(), f.rank())).norm(), 1e-10);
  for (Index l = 1; l < f.rank(); ++l) EXPECT_GE(f.eigvals()(l - 1), f.eigvals()(l));
}

TEST(Proxy, DenseOraclesBothFactorRoutes) {
  rng::CounterRng gen(4, {2});
  for (auto [m, q] : {std::pair<Index, Index>{5, 3}, {6, 4}, {3, 8}, {8, 8}}) {
    const MatrixXd Z = gen.normal_matrix(m, q);
    const double a = 0.7;
    const auto f = factor_proxy(Z, a);
    const MatrixXd S = a * Z * Z.transpose() + MatrixXd::Identity(m, m);
    const VectorXd v = gen.normal_vector(m);
    EXPECT_LT((S * apply_inv(f, v) - v).norm() / v.norm(), 1e-10);
    EXPECT_NEAR(trace_inv(f), S.inverse().trace(), 1e-10);
    const MatrixXd M = gen.normal_matrix(m, 2);
    EXPECT_LT((apply_inv_sqrt(f, apply_inv_sqrt(f, M)) - apply_inv(f, M)).norm(), 1e-9);
    EXPECT_LT((apply_inv_sqrt(f, M) - fixtures::dense_inv_sqrt(S) * M).norm(), 1e-9);
  }
}

TEST(Proxy, DroppedColumnMatchesReducedDesign) {
  rng::CounterRng gen(5, {3});
  const MatrixXd Z = gen.normal_matrix(6, 4);
  MatrixXd Zr(6, 3);
  Zr << Z.col(0), Z.col(2), Z.col(3);
  const auto f = factor_proxy(Z, 2.0, 1);
  EXPECT_EQ(f.dropped_col(), 1);
  EXPECT_LT((f.dense() - (2.0 * Zr * Zr.transpose() + MatrixXd::Identity(6, 6))).norm(), 1e-9);
}

TEST(Proxy, TraceDecreasesInA) {
  rng::CounterRng gen(6, {4});
  const MatrixXd Z = gen.normal_matrix(5, 2);
  double prev = trace_inv(factor_proxy(Z, 0.01));
  for (double a : {0.1, 1.0, 10.0, 100.0}) {
    const double t = trace_inv(factor_proxy(Z, a));
    EXPECT_LT(t, prev);
    EXPECT_GT(t, 0.0);
    prev = t;
  }
}

TEST(Proxy, QuadFormTheta) {
  rng::CounterRng gen(7, {5});
  const MatrixXd Z = gen.normal_matrix(5, 3);
  const VectorXd w = gen.normal_vector(5);

  const auto fz = factor_proxy(MatrixXd::Zero(5, 3), 1.0);
  EXPECT_NEAR(quad_form_theta(fz, Z, VectorXd::Zero(3), 1.0, w), w.squaredNorm(), 1e-12);

  const auto fb = factor_proxy(Z, 0.8, 0);
  const MatrixXd R = fixtures::dense_inv_sqrt(fb.dense());
  const double rank_one = Z.col(0).dot(R * w);
  EXPECT_NEAR(quad_form_theta(fb, Z, VectorXd::Unit(3, 0), 0.0, w), rank_one * rank_one, 1e-9);

  const VectorXd psi = (VectorXd(3) << 0.5, 2.0, 0.0).finished();
  const MatrixXd theta = Z * psi.asDiagonal() * Z.transpose() + 1.3 * MatrixXd::Identity(5, 5);
  const double want = w.dot(R * theta * R * w);
  EXPECT_NEAR(quad_form_theta(fb, Z, psi, 1.3, w), want, 1e-9 * std::abs(want));
}

TEST(Proxy, Errors) {
  MatrixXd Z = MatrixXd::Ones(3, 2);
  EXPECT_THROW(factor_proxy(Z, 1.0, 2), DataError);
  EXPECT_THROW(factor_proxy(Z, 0.0), DataError);
  EXPECT_THROW(apply_inv(factor_proxy(Z, 1.0), VectorXd(VectorXd::Ones(4))), DataError);
  Z(0, 0) = std::nan("");
  EXPECT_THROW(factor_proxy(Z, 1.0), DataError);
}
