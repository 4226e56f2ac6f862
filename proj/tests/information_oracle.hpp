#pragma once

// Dense reference for the expected-information approximation. With
// u = A Y ~ N(mu, sigma^2 I), every ingredient of the negative Hessian is a
// quadratic form u^T M u. Writing u = mu + sigma z, each becomes
// z^T A z + b^T z + c with A = sigma^2 M, b = 2 sigma M mu, c = mu^T M mu, and
// the joint cumulants of such forms in standard normal z are
//   k1(a)     = tr A_a + c_a
//   k2(a,b)   = 2 tr(A_a A_b) + b_a^T b_b
//   k3(a,b,c) = 8 tr(A_a A_b A_c) + 2 (b_a^T A_b b_c + b_a^T A_c b_b + b_b^T A_a b_c).
// Moments of products follow from the cumulants.

#include <Eigen/Dense>

#include <vector>

#include "support.hpp"

namespace psar::testing {

struct QuadForm {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  double c = 0.0;
};

inline QuadForm quad_form(const Eigen::MatrixXd& m, const Eigen::VectorXd& mu, double sigma2) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  const double sigma = std::sqrt(sigma2);
  return {sigma2 * sym, 2.0 * sigma * sym * mu, mu.dot(sym * mu)};
}

inline double k1(const QuadForm& f) { return f.a.trace() + f.c; }
inline double k2(const QuadForm& f, const QuadForm& g) { return 2.0 * (f.a * g.a).trace() + f.b.dot(g.b); }
inline double k3(const QuadForm& f, const QuadForm& g, const QuadForm& h) {
  return 8.0 * (f.a * g.a * h.a).trace() + 2.0 * (f.b.dot(g.a * h.b) + f.b.dot(h.a * g.b) + g.b.dot(f.a * h.b));
}

/// nT E[X/s] - 2 nT E[N/s^2] + T (G o G^T) through second-order expansions
/// of the ratios, with every moment computed exactly from dense matrices.
inline Eigen::MatrixXd dense_expected_information(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x, const Eigen::VectorXd& rho,
                                                  const Eigen::VectorXd& beta, double sigma2, Eigen::Index periods) {
  const Eigen::Index n = w.rows();
  const Eigen::Index rows = n * periods;
  const double nt = static_cast<double>(rows);
  const double t = static_cast<double>(periods);
  const Eigen::MatrixXd minv = (Eigen::MatrixXd::Identity(n, n) - w * Eigen::MatrixXd(rho.asDiagonal())).inverse();
  const Eigen::MatrixXd g = minv * w;
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(rows, rows) - dense_projection(x);
  const Eigen::VectorXd mu = x * beta;
  const Eigen::MatrixXd it = Eigen::MatrixXd::Identity(periods, periods);

  std::vector<Eigen::MatrixXd> f(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd block = w.col(i) * minv.row(i);  // W e_i e_i^T M^{-1}
    f[static_cast<std::size_t>(i)] = kron(it, block);
  }
  const QuadForm s = quad_form(r, mu, sigma2);
  std::vector<QuadForm> q;
  for (Eigen::Index i = 0; i < n; ++i) q.push_back(quad_form(f[static_cast<std::size_t>(i)].transpose() * r, mu, sigma2));

  const double es = k1(s);
  const double vs = k2(s, s);
  Eigen::MatrixXd info(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& fi = f[static_cast<std::size_t>(i)];
      const auto& fj = f[static_cast<std::size_t>(j)];
      const QuadForm xij = quad_form(fi.transpose() * r * fj, mu, sigma2);
      const double ex = k1(xij);
      const double cov_xs = k2(xij, s);
      const auto& qi = q[static_cast<std::size_t>(i)];
      const auto& qj = q[static_cast<std::size_t>(j)];
      const double en = k2(qi, qj) + k1(qi) * k1(qj);
      const double cov_ns = k3(qi, qj, s) + k2(qi, s) * k1(qj) + k2(qj, s) * k1(qi);
      const double e_ratio = ex / es - cov_xs / (es * es) + vs * ex / (es * es * es);
      const double e_ratio2 = en / (es * es) - 2.0 * cov_ns / (es * es * es) + 3.0 * vs * en / (es * es * es * es);
      info(i, j) = nt * e_ratio - 2.0 * nt * e_ratio2 + t * g(i, j) * g(j, i);
    }
  }
  return info;
}

}  // namespace psar::testing
