#pragma once

// Random instances and dense reference computations for the unit tests. The
// dense routines materialize the nT x nT operators and use textbook formulas
// only; they share no code with the block-structured library paths.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "psar/panel.hpp"
#include "psar/weights.hpp"

namespace psar::testing {

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  }
  return out;
}

/// I_nT - I_T (x) W diag(rho), materialized.
inline Eigen::MatrixXd dense_A(const Eigen::VectorXd& rho, const Eigen::MatrixXd& w, Eigen::Index periods) {
  const Eigen::Index n = w.rows();
  const Eigen::MatrixXd wp = w * Eigen::MatrixXd(rho.asDiagonal());
  return Eigen::MatrixXd::Identity(n * periods, n * periods) - kron(Eigen::MatrixXd::Identity(periods, periods), wp);
}

/// H (H^T H)^{-1} H^T through the explicit inverse.
inline Eigen::MatrixXd dense_projection(const Eigen::MatrixXd& h) {
  return h * (h.transpose() * h).inverse() * h.transpose();
}

/// Random nonnegative weights with zero diagonal, every region linked to its
/// successor on a ring plus random extra links, then row-standardized.
inline WeightsMatrix random_weights(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    raw(i, (i + 1) % n) = 0.5 + u(rng);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && u(rng) < 0.4) raw(i, j) += u(rng);
    }
  }
  return row_standardize(raw);
}

inline Eigen::VectorXd random_rho(Eigen::Index n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::VectorXd rho(n);
  for (Eigen::Index i = 0; i < n; ++i) rho(i) = u(rng);
  return rho;
}

/// Panel with X = [1, N(0,1) columns...] and y drawn from the model with
/// unit-variance Gaussian noise.
inline PanelDataset random_panel(const WeightsMatrix& w, Eigen::Index periods, Eigen::Index k, const Eigen::VectorXd& rho,
                                 std::mt19937_64& rng) {
  const Eigen::Index n = w.n();
  const Eigen::Index rows = n * periods;
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd x(rows, k);
  x.col(0).setOnes();
  for (Eigen::Index c = 1; c < k; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) x(r, c) = z(rng);
  }
  Eigen::VectorXd beta(k);
  for (Eigen::Index c = 0; c < k; ++c) beta(c) = z(rng);
  Eigen::VectorXd eps(rows);
  for (Eigen::Index r = 0; r < rows; ++r) eps(r) = z(rng);
  const Eigen::VectorXd y = dense_A(rho, w.matrix(), periods).fullPivLu().solve(x * beta + eps);
  std::vector<std::string> names{"const"};
  for (Eigen::Index c = 1; c < k; ++c) names.push_back("x" + std::to_string(c));
  return PanelDataset(n, periods, y, x, {}, {}, names);
}

inline double max_rel_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
}

}  // namespace psar::testing
