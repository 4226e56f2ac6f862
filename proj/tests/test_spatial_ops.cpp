#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "psar/error.hpp"
#include "psar/spatial_ops.hpp"
#include "support.hpp"

using psar::testing::dense_A;

namespace {

psar::WeightsMatrix swap2() { return psar::WeightsMatrix(Eigen::Matrix2d{{0, 1}, {1, 0}}); }

}  // namespace

TEST(ApplyA, ZeroRhoIsIdentity) {
  std::mt19937_64 rng(1);
  const auto w = psar::testing::random_weights(4, rng);
  const Eigen::VectorXd v = Eigen::VectorXd::Random(12);
  EXPECT_EQ(psar::apply_A(Eigen::VectorXd::Zero(4), w, v), v);
}

TEST(ApplyA, TwoRegionHandValue) {
  const Eigen::VectorXd out = psar::apply_A(Eigen::Vector2d(0.5, 0.5), swap2(), Eigen::VectorXd(Eigen::VectorXd::Ones(2)));
  EXPECT_NEAR(out(0), 0.5, 1e-15);
  EXPECT_NEAR(out(1), 0.5, 1e-15);
}

TEST(ApplyA, MatchesDenseKroneckerOracle) {
  std::mt19937_64 rng(11);
  for (Eigen::Index n = 2; n <= 8; ++n) {
    for (Eigen::Index periods = 1; periods <= 4; ++periods) {
      const auto w = psar::testing::random_weights(n, rng);
      const Eigen::VectorXd rho = psar::testing::random_rho(n, 0.95, rng);
      const Eigen::VectorXd v = Eigen::VectorXd::Random(n * periods);
      const Eigen::MatrixXd a = dense_A(rho, w.matrix(), periods);
      EXPECT_LT((psar::apply_A(rho, w, v) - a * v).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((psar::apply_A_transpose(rho, w, v) - a.transpose() * v).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((psar::solve_A(rho, w, v) - a.fullPivLu().solve(v)).cwiseAbs().maxCoeff(), 1e-10);
      const Eigen::MatrixXd m = Eigen::MatrixXd::Random(n * periods, 3);
      EXPECT_LT((psar::apply_A(rho, w, m) - a * m).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ApplyA, Linear) {
  std::mt19937_64 rng(5);
  const auto w = psar::testing::random_weights(6, rng);
  const Eigen::VectorXd rho = psar::testing::random_rho(6, 0.9, rng);
  const Eigen::VectorXd u = Eigen::VectorXd::Random(18);
  const Eigen::VectorXd v = Eigen::VectorXd::Random(18);
  const double alpha = -2.75;
  const Eigen::VectorXd lhs = psar::apply_A(rho, w, Eigen::VectorXd(alpha * u + v));
  const Eigen::VectorXd rhs = alpha * psar::apply_A(rho, w, u) + psar::apply_A(rho, w, v);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ApplyA, LengthMismatchRejected) {
  EXPECT_THROW(psar::apply_A(Eigen::Vector2d(0.1, 0.1), swap2(), Eigen::VectorXd(Eigen::VectorXd::Ones(3))), psar::InputError);
  EXPECT_THROW(psar::apply_A(Eigen::Vector3d(0.1, 0.1, 0.1), swap2(), Eigen::VectorXd(Eigen::VectorXd::Ones(4))), psar::InputError);
}

TEST(LogDetA, ClosedFormTwoByTwo) {
  const Eigen::Vector2d rho(0.5, 0.5);
  EXPECT_EQ(psar::log_det_A(Eigen::Vector2d::Zero(), swap2(), 3), 0.0);
  EXPECT_NEAR(psar::log_det_A(rho, swap2(), 1), std::log(0.75), 1e-15);
  EXPECT_NEAR(psar::log_det_A(rho, swap2(), 10), 10.0 * std::log(0.75), 1e-14);
}

TEST(LogDetA, AdditiveInPeriodsAndMatchesDense) {
  std::mt19937_64 rng(17);
  for (Eigen::Index n = 2; n <= 8; ++n) {
    const auto w = psar::testing::random_weights(n, rng);
    const Eigen::VectorXd rho = psar::testing::random_rho(n, 0.95, rng);
    const double one = psar::log_det_A(rho, w, 1);
    for (Eigen::Index periods = 1; periods <= 4; ++periods) {
      EXPECT_EQ(psar::log_det_A(rho, w, periods), static_cast<double>(periods) * one);
      const double dense = std::log(std::abs(dense_A(rho, w.matrix(), periods).fullPivLu().determinant()));
      EXPECT_NEAR(psar::log_det_A(rho, w, periods), dense, 1e-10);
    }
  }
}

TEST(LogDetA, SingularRejected) {
  // |rho| = 1 on a symmetric pair makes I - WP singular.
  EXPECT_ANY_THROW(psar::log_det_A(Eigen::Vector2d(1.0, 1.0), swap2(), 1));
}

TEST(SpatialInverse, TwoByTwoAnalytic) {
  const Eigen::MatrixXd inv = psar::solve_spatial_inverse(Eigen::Vector2d(0.5, 0.5), swap2());
  const Eigen::Matrix2d want = (1.0 / 0.75) * Eigen::Matrix2d{{1, 0.5}, {0.5, 1}};
  EXPECT_LT((inv - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(psar::solve_spatial_inverse(Eigen::Vector2d::Zero(), swap2()), Eigen::MatrixXd(Eigen::Matrix2d::Identity()));
}

TEST(SpatialInverse, ResidualSmall) {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    const auto w = psar::testing::random_weights(5, rng);
    const Eigen::VectorXd rho = psar::testing::random_rho(5, 0.99, rng);
    const Eigen::MatrixXd m = psar::spatial_filter_matrix(rho, w);
    EXPECT_LT((m * psar::solve_spatial_inverse(rho, w) - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SpatialLag, PowersCompose) {
  std::mt19937_64 rng(29);
  const auto w = psar::testing::random_weights(4, rng);
  const Eigen::MatrixXd m = Eigen::MatrixXd::Random(12, 2);
  const Eigen::MatrixXd w2 = psar::testing::kron(Eigen::MatrixXd::Identity(3, 3), w.matrix() * w.matrix());
  EXPECT_LT((psar::spatial_lag(w, m, 2) - w2 * m).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(psar::spatial_lag(w, m, 0), m);
  // Row-stochastic W fixes constants.
  EXPECT_LT((psar::spatial_lag(w, Eigen::MatrixXd::Ones(12, 1), 3).array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(Stationarity, RejectsUnitCoefficients) {
  EXPECT_THROW(psar::require_stationary(Eigen::Vector2d(0.2, -1.0), swap2()), psar::InputError);
  EXPECT_NO_THROW(psar::require_stationary(Eigen::Vector2d(0.2, -0.999), swap2()));
}
