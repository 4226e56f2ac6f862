#include "psar/spatial_ops.hpp"

#include <cmath>
#include <string>

#include "psar/error.hpp"

namespace psar {

namespace {

void require_length(const RhoVector& rho, const WeightsMatrix& w) {
  if (rho.size() != w.n())
    throw InputError("rho has length " + std::to_string(rho.size()) + " but weights have n = " + std::to_string(w.n()));
}

Eigen::PartialPivLU<Eigen::MatrixXd> factor_filter(const RhoVector& rho, const WeightsMatrix& w) {
  return Eigen::PartialPivLU<Eigen::MatrixXd>(spatial_filter_matrix(rho, w));
}

double log_abs_det(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
  const auto& u = lu.matrixLU();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) acc += std::log(std::abs(u(i, i)));
  return acc;
}

constexpr double kLogDetFloor = -690.7755278982137;  // ln(1e-300)

void require_nonsingular(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
  const double ld = log_abs_det(lu);
  if (!std::isfinite(ld) || ld < kLogDetFloor) throw NumericalError("I_n - W P is numerically singular");
}

}  // namespace

Eigen::Index periods_of(const WeightsMatrix& w, Eigen::Index stacked_length) {
  if (stacked_length <= 0 || stacked_length % w.n() != 0)
    throw InputError("stacked length " + std::to_string(stacked_length) + " is not a positive multiple of n = " +
                     std::to_string(w.n()));
  return stacked_length / w.n();
}

void require_stationary(const RhoVector& rho, const WeightsMatrix& w) {
  require_length(rho, w);
  if (!rho.allFinite() || rho.cwiseAbs().maxCoeff() >= 1.0) throw InputError("spatial coefficients must satisfy |rho_i| < 1");
}

Eigen::MatrixXd spatial_filter_matrix(const RhoVector& rho, const WeightsMatrix& w) {
  require_length(rho, w);
  Eigen::MatrixXd m = -(w.matrix() * rho.asDiagonal());
  m.diagonal().array() += 1.0;
  return m;
}

Eigen::VectorXd apply_A(const RhoVector& rho, const WeightsMatrix& w, const Eigen::VectorXd& v) {
  require_length(rho, w);
  const Eigen::Index n = w.n();
  const Eigen::Index periods = periods_of(w, v.size());
  Eigen::VectorXd out(v.size());
  Eigen::Map<const Eigen::MatrixXd> vin(v.data(), n, periods);
  Eigen::Map<Eigen::MatrixXd> vout(out.data(), n, periods);
  vout.noalias() = vin - w.matrix() * (rho.asDiagonal() * vin);
  return out;
}

Eigen::VectorXd apply_A_transpose(const RhoVector& rho, const WeightsMatrix& w, const Eigen::VectorXd& v) {
  require_length(rho, w);
  const Eigen::Index n = w.n();
  const Eigen::Index periods = periods_of(w, v.size());
  Eigen::VectorXd out(v.size());
  Eigen::Map<const Eigen::MatrixXd> vin(v.data(), n, periods);
  Eigen::Map<Eigen::MatrixXd> vout(out.data(), n, periods);
  vout.noalias() = vin - rho.asDiagonal() * (w.matrix().transpose() * vin);
  return out;
}

Eigen::VectorXd solve_A(const RhoVector& rho, const WeightsMatrix& w, const Eigen::VectorXd& v) {
  const Eigen::Index n = w.n();
  const Eigen::Index periods = periods_of(w, v.size());
  const auto lu = factor_filter(rho, w);
  require_nonsingular(lu);
  Eigen::VectorXd out(v.size());
  Eigen::Map<const Eigen::MatrixXd> vin(v.data(), n, periods);
  Eigen::Map<Eigen::MatrixXd> vout(out.data(), n, periods);
  vout = lu.solve(vin);
  return out;
}

Eigen::MatrixXd apply_A(const RhoVector& rho, const WeightsMatrix& w, const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.col(c) = apply_A(rho, w, Eigen::VectorXd(m.col(c)));
  return out;
}

Eigen::MatrixXd apply_A_transpose(const RhoVector& rho, const WeightsMatrix& w, const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.col(c) = apply_A_transpose(rho, w, Eigen::VectorXd(m.col(c)));
  return out;
}

Eigen::MatrixXd spatial_lag(const WeightsMatrix& w, const Eigen::MatrixXd& m, int power) {
  if (power < 0) throw InputError("spatial lag power must be nonnegative");
  const Eigen::Index n = w.n();
  const Eigen::Index periods = periods_of(w, m.rows());
  Eigen::MatrixXd out = m;
  for (int p = 0; p < power; ++p) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      Eigen::Map<Eigen::MatrixXd> block(out.col(c).data(), n, periods);
      block = w.matrix() * block.eval();
    }
  }
  return out;
}

double log_det_A(const RhoVector& rho, const WeightsMatrix& w, Eigen::Index periods) {
  require_stationary(rho, w);
  if (periods < 1) throw InputError("number of periods must be positive");
  const auto lu = factor_filter(rho, w);
  require_nonsingular(lu);
  return static_cast<double>(periods) * log_abs_det(lu);
}

Eigen::MatrixXd solve_spatial_inverse(const RhoVector& rho, const WeightsMatrix& w) {
  require_stationary(rho, w);
  const auto lu = factor_filter(rho, w);
  require_nonsingular(lu);
  return lu.inverse();
}

}  // namespace psar
