#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "psar/panel.hpp"
#include "psar/spatial_ops.hpp"
#include "psar/weights.hpp"

namespace psar {

enum class RhoInit { zeros, robust, explicit_value };

/// Which curvature drives the scoring step and the reported rho covariance.
enum class InformationKind {
  expected,  // second-order approximation of -E[Hessian]
  observed,  // -Hessian at the current iterate
};

struct ScoringConfig {
  double epsilon = 1e-8;        // on ||rho_{m+1} - rho_m||_inf
  double score_tolerance = 1e-6;  // on ||score||_inf
  int max_iterations = 200;
  RhoInit init = RhoInit::zeros;
  RhoVector rho_init;  // used when init == explicit_value
  int robust_q = 2;    // instrument order for the robust warm start
  double step_damping = 1.0;
  InformationKind information = InformationKind::expected;
  // With expected information, switch to the observed one whenever the
  // approximation is not positive definite before flooring.
  bool fallback_to_observed = true;
  // Once ||step||_inf drops below this, take Newton steps with the observed
  // information whenever it is positive definite. Scoring alone converges only
  // linearly. Zero disables.
  double newton_polish_below = 1e-3;

  void validate() const;
};

struct TraceEntry {
  int iteration = 0;
  RhoVector rho;
  double loglik = 0.0;
};

struct MlFit {
  RhoVector rho_hat;
  Eigen::VectorXd beta_hat;
  double sigma2_hat = 0.0;
  Eigen::MatrixXd rho_cov;   // inverse information
  Eigen::MatrixXd rho_info;  // information matrix at rho_hat
  Eigen::MatrixXd beta_cov;
  Eigen::VectorXd score;     // at rho_hat
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  // Regions whose coefficient sits on the clamp bound with the score pointing
  // outward; convergence is then judged on the remaining score components.
  std::vector<bool> at_bound;
  std::vector<TraceEntry> trace;
  ScoringConfig config;
};

/// Concentrated Gaussian log-likelihood in rho with beta and sigma^2 profiled out,
/// plus its derivatives. Owns copies of the panel and weights together with the
/// QR factorization of X; const member functions are safe to call concurrently.
class ProfileLikelihood {
 public:
  ProfileLikelihood(const PanelDataset& data, const WeightsMatrix& w);

  [[nodiscard]] Eigen::VectorXd beta(const RhoVector& rho) const;
  [[nodiscard]] double sigma2(const RhoVector& rho, const Eigen::VectorXd& beta) const;

  /// -(nT/2) ln(SSR/nT) + ln|A| - (nT/2)(1 + ln 2pi).
  [[nodiscard]] double loglik(const RhoVector& rho) const;
  [[nodiscard]] Eigen::VectorXd score(const RhoVector& rho) const;
  [[nodiscard]] Eigen::MatrixXd hessian(const RhoVector& rho) const;

  /// Approximate -E[Hessian] at (rho, beta, sigma2), treating those values as the
  /// truth. Symmetrized, eigenvalues floored at 1e-8.
  [[nodiscard]] Eigen::MatrixXd expected_information(const RhoVector& rho, const Eigen::VectorXd& beta,
                                                     double sigma2) const;

  /// Same as above before symmetrization and flooring; exposed for diagnostics.
  [[nodiscard]] Eigen::MatrixXd expected_information_raw(const RhoVector& rho, const Eigen::VectorXd& beta,
                                                         double sigma2) const;

  [[nodiscard]] const PanelDataset& data() const { return data_; }
  [[nodiscard]] const WeightsMatrix& weights() const { return w_; }

 private:
  struct Evaluation;
  [[nodiscard]] Evaluation evaluate(const RhoVector& rho, bool need_d) const;
  [[nodiscard]] Eigen::VectorXd residual_maker(const Eigen::VectorXd& v) const;

  PanelDataset data_;
  WeightsMatrix w_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::MatrixXd q_;  // thin orthonormal basis of col(X)
};

/// (X^T X)^{-1} X^T A Y.
Eigen::VectorXd beta_given_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho);

/// ||A Y - X beta||^2 / nT.
double sigma2_given(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho,
                    const Eigen::VectorXd& beta);

double concentrated_loglik(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho);
Eigen::VectorXd score_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho);
Eigen::MatrixXd hessian_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho);
Eigen::MatrixXd fisher_info_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho,
                                const Eigen::VectorXd& beta, double sigma2);

/// sigma^2 (X^T X)^{-1} X^T A A^T X (X^T X)^{-1}.
Eigen::MatrixXd beta_covariance(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho,
                                double sigma2);

/// Fisher scoring on the concentrated likelihood. Non-convergence is reported
/// through MlFit::converged, not thrown.
MlFit fit_ml(const PanelDataset& data, const WeightsMatrix& w, const ScoringConfig& config = {});

/// Symmetrizes and floors the spectrum at `floor`. Throws NumericalError on non-finite input.
Eigen::MatrixXd project_positive_definite(const Eigen::MatrixXd& m, double floor = 1e-8);

}  // namespace psar
