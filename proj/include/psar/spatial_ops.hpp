#pragma once

#include <Eigen/Dense>

#include "psar/weights.hpp"

namespace psar {

/// Region-specific spatial coefficients, the diagonal of P.
using RhoVector = Eigen::VectorXd;

// All operators below act on time-major stacked vectors of length nT: entries
// t*n .. t*n+n-1 hold period t. A = I_nT - (I_T (x) W P) is applied one n-block
// at a time and never formed.

/// I_n - W P.
Eigen::MatrixXd spatial_filter_matrix(const RhoVector& rho, const WeightsMatrix& w);

/// A v, blockwise v_t - W (rho o v_t).
Eigen::VectorXd apply_A(const RhoVector& rho, const WeightsMatrix& w, const Eigen::VectorXd& v);

/// A^T v, blockwise v_t - rho o (W^T v_t).
Eigen::VectorXd apply_A_transpose(const RhoVector& rho, const WeightsMatrix& w, const Eigen::VectorXd& v);

/// A^{-1} v, one LU factorization of I_n - W P reused for every block.
Eigen::VectorXd solve_A(const RhoVector& rho, const WeightsMatrix& w, const Eigen::VectorXd& v);

/// Column-wise A M for an nT x k matrix.
Eigen::MatrixXd apply_A(const RhoVector& rho, const WeightsMatrix& w, const Eigen::MatrixXd& m);
Eigen::MatrixXd apply_A_transpose(const RhoVector& rho, const WeightsMatrix& w, const Eigen::MatrixXd& m);

/// (I_T (x) W^power) applied to every column of an nT x k matrix.
Eigen::MatrixXd spatial_lag(const WeightsMatrix& w, const Eigen::MatrixXd& m, int power = 1);

/// ln|A| = T ln|det(I_n - W P)|. Requires max|rho| < 1; throws NumericalError
/// when |det| drops below 1e-300.
double log_det_A(const RhoVector& rho, const WeightsMatrix& w, Eigen::Index periods);

/// (I_n - W P)^{-1}. Requires max|rho| < 1.
Eigen::MatrixXd solve_spatial_inverse(const RhoVector& rho, const WeightsMatrix& w);

/// Throws InputError unless rho has length n and every |rho_i| < 1.
void require_stationary(const RhoVector& rho, const WeightsMatrix& w);

/// Number of periods T implied by a stacked length; throws when not a positive multiple of n.
Eigen::Index periods_of(const WeightsMatrix& w, Eigen::Index stacked_length);

}  // namespace psar
