#include "psar/inference.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "psar/error.hpp"

namespace psar {

namespace {

constexpr double kRhoBound = 1.0 - 1e-6;

}  // namespace

CommonRhoFit fit_common_rho(const PanelDataset& data, const WeightsMatrix& w) {
  const ProfileLikelihood lik(data, w);
  const Eigen::Index n = w.n();
  auto along = [&](double r) { return RhoVector::Constant(n, r); };
  auto neg_ll = [&](double r) {
    try {
      return -lik.loglik(along(r));
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  constexpr int kGrid = 80;
  double best_r = 0.0;
  double best = neg_ll(0.0);
  for (int g = 0; g <= kGrid; ++g) {
    const double r = -kRhoBound + 2.0 * kRhoBound * g / kGrid;
    const double v = neg_ll(r);
    if (v < best) {
      best = v;
      best_r = r;
    }
  }
  const double step = 2.0 * kRhoBound / kGrid;
  const double lo = std::max(-kRhoBound, best_r - step);
  const double hi = std::min(kRhoBound, best_r + step);
  const auto [r_hat, value] = boost::math::tools::brent_find_minima(neg_ll, lo, hi, 50);

  CommonRhoFit fit;
  fit.rho0_hat = r_hat;
  fit.loglik = -value;
  fit.at_boundary = std::abs(r_hat) > kRhoBound - 1e-9;
  const RhoVector rho = along(r_hat);
  fit.beta = lik.beta(rho);
  // d^2/dr^2 of l(r 1) = 1^T H 1.
  const double curvature = lik.hessian(rho).sum();
  if (!(curvature < 0.0)) throw NumericalError("pooled likelihood is not concave at its maximum");
  fit.var_rho0 = -1.0 / curvature;
  return fit;
}

double f_upper_tail(double x, double d1, double d2) {
  if (!(x > 0.0)) return 1.0;
  if (!std::isfinite(x)) return 0.0;
  const boost::math::fisher_f_distribution<double> dist(d1, d2);
  return boost::math::cdf(boost::math::complement(dist, x));
}

HomogeneityTestReport hotelling_homogeneity_test(double rho0, double var_rho0, const RhoVector& rho_hat,
                                                 const Eigen::MatrixXd& rho_cov, Eigen::Index n, Eigen::Index periods) {
  if (rho_hat.size() != n || rho_cov.rows() != n || rho_cov.cols() != n)
    throw InputError("homogeneity test: dimensions do not match n");
  if (!(var_rho0 > 0.0)) throw InputError("homogeneity test: pooled variance must be positive");
  if (periods < 1) throw InputError("homogeneity test: T must be positive");

  const double nt = static_cast<double>(n * periods);
  const Eigen::MatrixXd s1 = var_rho0 * Eigen::MatrixXd::Ones(n, n);
  const Eigen::MatrixXd s2 = 0.5 * (rho_cov + rho_cov.transpose());
  const Eigen::MatrixXd total = s1 + s2;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(total);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw NumericalError("homogeneity test: covariance of the contrast is not invertible");

  const Eigen::VectorXd d = RhoVector::Constant(n, rho0) - rho_hat;
  const Eigen::VectorXd sd = ldlt.solve(d);

  HomogeneityTestReport rep;
  rep.rho0_hat = rho0;
  rep.var_rho0 = var_rho0;
  rep.df1 = n;
  rep.t2 = std::max(0.0, d.dot(sd));
  const double dn = static_cast<double>(n);
  rep.f_stat = (2.0 * nt - dn - 1.0) / (dn * (2.0 * nt - 1.0)) * rep.t2;
  if (rep.t2 == 0.0) {
    // Zero contrast: the Satterthwaite ratios are 0/0; use the smaller df bound.
    rep.df2 = nt - 1.0;
    rep.p_value = 1.0;
    return rep;
  }
  double inv_v = 0.0;
  for (const Eigen::MatrixXd* si : {&s1, &s2}) {
    const double ratio = sd.dot(*si * sd) / rep.t2;
    inv_v += ratio * ratio;
  }
  inv_v /= (nt - 1.0);
  rep.df2 = 1.0 / inv_v;
  if (!std::isfinite(rep.df2) || !(rep.df2 > 0.0)) throw NumericalError("degenerate Satterthwaite df");
  rep.p_value = f_upper_tail(rep.f_stat, dn, rep.df2);
  return rep;
}

std::vector<WaldRow> wald_table(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& cov,
                                const std::vector<std::string>& names) {
  if (cov.rows() != estimate.size() || cov.cols() != estimate.size() ||
      static_cast<Eigen::Index>(names.size()) != estimate.size())
    throw InputError("wald table: dimension mismatch");
  std::vector<WaldRow> rows;
  rows.reserve(names.size());
  for (Eigen::Index i = 0; i < estimate.size(); ++i) {
    const double var = cov(i, i);
    if (!(var >= 0.0)) throw NumericalError("wald table: negative variance for '" + names[static_cast<std::size_t>(i)] + "'");
    WaldRow row;
    row.parameter = names[static_cast<std::size_t>(i)];
    row.estimate = estimate(i);
    row.std_error = std::sqrt(var);
    if (row.std_error > 0.0) {
      row.z = row.estimate / row.std_error;
    } else {
      row.z = row.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), row.estimate);
    }
    row.p_value = std::erfc(std::abs(row.z) / std::numbers::sqrt2);
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::vector<std::string> parameter_names(const PanelDataset& data) {
  std::vector<std::string> names = data.covariate_names();
  for (const auto& r : data.region_ids()) names.push_back("rho[" + r + "]");
  return names;
}

}  // namespace

std::vector<WaldRow> wald_table(const MlFit& fit, const PanelDataset& data) {
  const Eigen::Index k = data.k();
  const Eigen::Index n = data.n();
  Eigen::VectorXd est(k + n);
  est << fit.beta_hat, fit.rho_hat;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k + n, k + n);
  cov.topLeftCorner(k, k) = fit.beta_cov;
  cov.bottomRightCorner(n, n) = fit.rho_cov;
  return wald_table(est, cov, parameter_names(data));
}

std::vector<WaldRow> wald_table(const RobustFit& fit, const PanelDataset& data) {
  return wald_table(fit.delta_hat, fit.cov, parameter_names(data));
}

ImpactSummary impacts(const Eigen::VectorXd& beta, const RhoVector& rho, const WeightsMatrix& w,
                      const std::vector<bool>& covariate_flags, const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(covariate_flags.size()) != beta.size())
    throw InputError("impacts: one flag per covariate required");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != beta.size())
    throw InputError("impacts: one name per covariate required");
  const Eigen::MatrixXd inv = solve_spatial_inverse(rho, w);
  const double n = static_cast<double>(w.n());
  const double mean_diag = inv.diagonal().sum() / n;
  const double mean_off = (inv.sum() - inv.diagonal().sum()) / n;
  ImpactSummary out;
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    if (!covariate_flags[static_cast<std::size_t>(k)]) continue;
    Impact imp;
    imp.covariate = names.empty() ? "x" + std::to_string(k) : names[static_cast<std::size_t>(k)];
    imp.direct = beta(k) * mean_diag;
    imp.indirect = beta(k) * mean_off;
    imp.total = imp.direct + imp.indirect;
    out.push_back(imp);
  }
  return out;
}

std::vector<bool> non_intercept_flags(const PanelDataset& data) {
  std::vector<bool> flags(static_cast<std::size_t>(data.k()), true);
  for (Eigen::Index c = 0; c < data.k(); ++c) {
    if ((data.x().col(c).array() == 1.0).all()) flags[static_cast<std::size_t>(c)] = false;
  }
  return flags;
}

}  // namespace psar
