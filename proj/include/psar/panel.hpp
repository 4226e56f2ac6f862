#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "psar/weights.hpp"

namespace psar {

/// Balanced spatial panel: n regions observed over T periods, K covariates.
///
/// Rows are stacked time-major, row index = t*n + i (0-based), so y viewed as a
/// column-major n x T matrix has period t in column t. The design matrix must
/// have full column rank; a column that is a linear combination of earlier
/// columns is rejected by name.
class PanelDataset {
 public:
  PanelDataset(Eigen::Index n, Eigen::Index periods, Eigen::VectorXd y, Eigen::MatrixXd x,
               std::vector<std::string> region_ids = {}, std::vector<std::string> time_ids = {},
               std::vector<std::string> covariate_names = {});

  [[nodiscard]] Eigen::Index n() const { return n_; }
  [[nodiscard]] Eigen::Index periods() const { return periods_; }
  [[nodiscard]] Eigen::Index k() const { return x_.cols(); }
  [[nodiscard]] Eigen::Index rows() const { return y_.size(); }

  [[nodiscard]] const Eigen::VectorXd& y() const { return y_; }
  [[nodiscard]] const Eigen::MatrixXd& x() const { return x_; }

  /// y as an n x T matrix (column t = period t).
  [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> y_matrix() const { return {y_.data(), n_, periods_}; }

  [[nodiscard]] const std::vector<std::string>& region_ids() const { return region_ids_; }
  [[nodiscard]] const std::vector<std::string>& time_ids() const { return time_ids_; }
  [[nodiscard]] const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  /// Throws InputError if the panel and the weights disagree on n.
  void require_compatible(const WeightsMatrix& w) const;

  /// Regions reordered so that old region perm[k] becomes region k.
  [[nodiscard]] PanelDataset permuted_regions(const std::vector<Eigen::Index>& perm) const;

 private:
  Eigen::Index n_;
  Eigen::Index periods_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  std::vector<std::string> region_ids_;
  std::vector<std::string> time_ids_;
  std::vector<std::string> covariate_names_;
};

/// Appends y_{i,t-1} as the last covariate (named "y_lag") and drops the first period.
PanelDataset add_response_lag(const PanelDataset& data);

/// Index of the first design column that is (numerically) a linear combination
/// of the columns before it, or -1 when X has full column rank.
Eigen::Index first_dependent_column(const Eigen::MatrixXd& x, double tolerance = 1e-10);

}  // namespace psar
