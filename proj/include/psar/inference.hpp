#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "psar/ml_estimator.hpp"
#include "psar/panel.hpp"
#include "psar/robust_estimator.hpp"
#include "psar/spatial_ops.hpp"
#include "psar/weights.hpp"

namespace psar {

/// Pooled SAR fit with one coefficient shared by every region.
struct CommonRhoFit {
  double rho0_hat = 0.0;
  double var_rho0 = 0.0;  // inverse observed information of the concentrated likelihood
  Eigen::VectorXd beta;
  double loglik = 0.0;
  bool at_boundary = false;  // |rho0| > 1 - 1e-6
};

/// Grid scan of the concentrated likelihood along rho = r 1, then Brent refinement.
CommonRhoFit fit_common_rho(const PanelDataset& data, const WeightsMatrix& w);

struct HomogeneityTestReport {
  double t2 = 0.0;
  double f_stat = 0.0;
  Eigen::Index df1 = 0;
  double df2 = 0.0;
  double p_value = 1.0;
  double rho0_hat = 0.0;
  double var_rho0 = 0.0;
};

/// Tests rho_1 = ... = rho_n against region-specific coefficients.
///
/// `rho_cov` is the covariance of rho_hat (inverse information) and `var_rho0`
/// the variance of the pooled estimate; both are rescaled by nT to
/// per-observation covariances before entering the statistic, so that
///   T^2 = nT d^T [nT var_rho0 J + nT rho_cov]^{-1} d = d^T [var_rho0 J + rho_cov]^{-1} d,
/// with d = rho0 1 - rho_hat. F = (2nT-n-1)/(n(2nT-1)) T^2 is referred to
/// F(n, v), with v from the two-covariance Satterthwaite-type correction.
HomogeneityTestReport hotelling_homogeneity_test(double rho0, double var_rho0, const RhoVector& rho_hat,
                                                 const Eigen::MatrixXd& rho_cov, Eigen::Index n, Eigen::Index periods);

struct WaldRow {
  std::string parameter;
  double estimate = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

/// Two-sided normal p-values from a point estimate and its covariance.
std::vector<WaldRow> wald_table(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& cov,
                                const std::vector<std::string>& names);
std::vector<WaldRow> wald_table(const MlFit& fit, const PanelDataset& data);
std::vector<WaldRow> wald_table(const RobustFit& fit, const PanelDataset& data);

struct Impact {
  std::string covariate;
  double direct = 0.0;
  double indirect = 0.0;
  double total = 0.0;
};

using ImpactSummary = std::vector<Impact>;

/// Average effects of S_k = beta_k (I_n - W P)^{-1}: direct is the mean diagonal,
/// total the mean row sum, indirect the difference. Only covariates whose flag is
/// set are reported.
ImpactSummary impacts(const Eigen::VectorXd& beta, const RhoVector& rho, const WeightsMatrix& w,
                      const std::vector<bool>& covariate_flags, const std::vector<std::string>& names = {});

/// Flags every covariate except an all-ones intercept column.
std::vector<bool> non_intercept_flags(const PanelDataset& data);

/// Upper tail of F(d1, d2); d2 may be fractional.
double f_upper_tail(double x, double d1, double d2);

}  // namespace psar
