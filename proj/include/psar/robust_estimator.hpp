#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "psar/panel.hpp"
#include "psar/spatial_ops.hpp"
#include "psar/weights.hpp"

namespace psar {

/// Where an instrument column came from.
struct InstrumentSource {
  int power = 0;        // j in (I_T (x) W^j) X
  Eigen::Index covariate = 0;
  Eigen::Index region = -1;  // >= 0 for region-interacted columns built like D from a lag column

  [[nodiscard]] std::string describe(const std::vector<std::string>& covariate_names,
                                     const std::vector<std::string>& region_ids) const;
};

enum class InstrumentScope {
  // [X, (I_T (x) W)X, ..., (I_T (x) W^q)X] only. Identifies at most L - K
  // spatial coefficients, so it fails for n > L - K.
  spatial_lags,
  // spatial_lags plus, for every region i and every kept lag column g of power
  // below q, the column whose period-t block is W_{.i} g_{it}. These are the
  // exogenous counterparts of the columns of D.
  region_interacted,
};

/// Linearly independent instrument columns plus an orthonormal basis of their span.
class InstrumentSet {
 public:
  /// Keeps columns of `candidates` in order, dropping any whose component
  /// orthogonal to the already kept ones is below 1e-10 of its norm.
  InstrumentSet(const Eigen::MatrixXd& candidates, std::vector<InstrumentSource> sources, int q);

  [[nodiscard]] const Eigen::MatrixXd& h() const { return h_; }
  [[nodiscard]] const Eigen::MatrixXd& basis() const { return basis_; }
  [[nodiscard]] Eigen::Index size() const { return h_.cols(); }
  [[nodiscard]] int q() const { return q_; }
  [[nodiscard]] const std::vector<InstrumentSource>& kept_columns() const { return kept_; }

  /// Condition number of H^T H.
  [[nodiscard]] double gram_condition() const;

 private:
  Eigen::MatrixXd h_;
  Eigen::MatrixXd basis_;
  std::vector<InstrumentSource> kept_;
  int q_;
};

struct RobustFitDiagnostics {
  double instrument_gram_condition = 0.0;  // cond(H^T H)
  double normal_matrix_condition = 0.0;    // cond((P_H Z)^T Z)
  Eigen::Index instrument_count = 0;
};

struct RobustFit {
  Eigen::VectorXd delta_hat;  // beta (K) then rho (n)
  Eigen::MatrixXd cov;          // HC0 sandwich B diag(e^2) B^T
  Eigen::MatrixXd cov_literal;  // (1/T) B B^T, no innovation variance
  std::vector<bool> rho_in_range;  // |rho_i| < 1
  double sigma2_hat = 0.0;         // mean squared structural residual
  RobustFitDiagnostics diagnostics;
  std::vector<InstrumentSource> kept_columns;
  int q = 2;
  Eigen::Index k = 0;

  [[nodiscard]] Eigen::VectorXd beta() const { return delta_hat.head(k); }
  [[nodiscard]] RhoVector rho() const { return delta_hat.tail(delta_hat.size() - k); }
  [[nodiscard]] Eigen::MatrixXd beta_cov() const { return cov.topLeftCorner(k, k); }
  [[nodiscard]] Eigen::MatrixXd rho_cov() const {
    const auto m = delta_hat.size() - k;
    return cov.bottomRightCorner(m, m);
  }
};

/// nT x n matrix whose column j in period block t is y_{jt} W_{.j}; D rho = (I_T (x) W P) Y.
Eigen::MatrixXd build_D(const WeightsMatrix& w, const PanelDataset& data);

/// Throws InputError "under-identified: ..." when the spatial lags add no rank
/// beyond X, or when fewer than K + n instruments remain.
InstrumentSet build_instruments(const PanelDataset& data, const WeightsMatrix& w, int q,
                                InstrumentScope scope = InstrumentScope::region_interacted);

/// P_H v through the orthonormal basis; P_H is never formed.
Eigen::VectorXd projection_apply(const InstrumentSet& h, const Eigen::VectorXd& v);
Eigen::MatrixXd projection_apply(const InstrumentSet& h, const Eigen::MatrixXd& m);

/// Instrumented least squares for delta = (beta, rho).
RobustFit fit_robust(const PanelDataset& data, const WeightsMatrix& w, int q = 2,
                     InstrumentScope scope = InstrumentScope::region_interacted);

/// Same estimator with a caller-supplied instrument set.
RobustFit fit_robust(const PanelDataset& data, const WeightsMatrix& w, const InstrumentSet& instruments);

}  // namespace psar
