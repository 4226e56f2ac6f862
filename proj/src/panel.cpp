#include "psar/panel.hpp"

#include <string>

#include "psar/error.hpp"

namespace psar {

namespace {

std::vector<std::string> numbered(Eigen::Index count, const std::string& prefix) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace

Eigen::Index first_dependent_column(const Eigen::MatrixXd& x, double tolerance) {
  // Modified Gram-Schmidt with one reorthogonalization pass.
  Eigen::MatrixXd basis(x.rows(), x.cols());
  Eigen::Index kept = 0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::VectorXd v = x.col(c);
    const double norm0 = v.norm();
    if (norm0 == 0.0) return c;
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index b = 0; b < kept; ++b) v -= basis.col(b).dot(v) * basis.col(b);
    }
    const double norm = v.norm();
    if (norm <= tolerance * norm0) return c;
    basis.col(kept++) = v / norm;
  }
  return -1;
}

PanelDataset::PanelDataset(Eigen::Index n, Eigen::Index periods, Eigen::VectorXd y, Eigen::MatrixXd x,
                           std::vector<std::string> region_ids, std::vector<std::string> time_ids,
                           std::vector<std::string> covariate_names)
    : n_(n),
      periods_(periods),
      y_(std::move(y)),
      x_(std::move(x)),
      region_ids_(std::move(region_ids)),
      time_ids_(std::move(time_ids)),
      covariate_names_(std::move(covariate_names)) {
  if (n_ < 1 || periods_ < 1) throw InputError("panel needs n >= 1 and T >= 1");
  if (y_.size() != n_ * periods_)
    throw InputError("response length " + std::to_string(y_.size()) + " != n*T = " + std::to_string(n_ * periods_));
  if (x_.rows() != y_.size()) throw InputError("design matrix rows do not match response length");
  if (x_.cols() < 1) throw InputError("design matrix needs at least one column");
  if (!y_.allFinite() || !x_.allFinite()) throw InputError("panel contains non-finite values");
  if (region_ids_.empty()) region_ids_ = numbered(n_, "");
  if (time_ids_.empty()) time_ids_ = numbered(periods_, "");
  if (covariate_names_.empty()) covariate_names_ = numbered(x_.cols(), "x");
  if (static_cast<Eigen::Index>(region_ids_.size()) != n_) throw InputError("region id count != n");
  if (static_cast<Eigen::Index>(time_ids_.size()) != periods_) throw InputError("time id count != T");
  if (static_cast<Eigen::Index>(covariate_names_.size()) != x_.cols()) throw InputError("covariate name count != K");
  if (x_.cols() > x_.rows()) throw InputError("more covariates than observations");
  const Eigen::Index bad = first_dependent_column(x_);
  if (bad >= 0)
    throw InputError("design matrix is rank deficient: column '" + covariate_names_[static_cast<std::size_t>(bad)] +
                     "' is collinear with earlier columns");
}

void PanelDataset::require_compatible(const WeightsMatrix& w) const {
  if (w.n() != n_)
    throw InputError("panel has " + std::to_string(n_) + " regions but weights have " + std::to_string(w.n()));
}

PanelDataset PanelDataset::permuted_regions(const std::vector<Eigen::Index>& perm) const {
  if (static_cast<Eigen::Index>(perm.size()) != n_) throw InputError("permutation size mismatch");
  Eigen::VectorXd y(y_.size());
  Eigen::MatrixXd x(x_.rows(), x_.cols());
  std::vector<std::string> ids(static_cast<std::size_t>(n_));
  for (Eigen::Index a = 0; a < n_; ++a) {
    const Eigen::Index src = perm[static_cast<std::size_t>(a)];
    ids[static_cast<std::size_t>(a)] = region_ids_[static_cast<std::size_t>(src)];
    for (Eigen::Index t = 0; t < periods_; ++t) {
      y(t * n_ + a) = y_(t * n_ + src);
      x.row(t * n_ + a) = x_.row(t * n_ + src);
    }
  }
  return PanelDataset(n_, periods_, std::move(y), std::move(x), std::move(ids), time_ids_, covariate_names_);
}

PanelDataset add_response_lag(const PanelDataset& data) {
  const Eigen::Index n = data.n();
  const Eigen::Index periods = data.periods();
  if (periods < 2) throw InputError("a response lag needs T >= 2");
  const Eigen::Index rows = n * (periods - 1);
  Eigen::VectorXd y = data.y().tail(rows);
  Eigen::MatrixXd x(rows, data.k() + 1);
  x.leftCols(data.k()) = data.x().bottomRows(rows);
  x.col(data.k()) = data.y().head(rows);
  std::vector<std::string> times(data.time_ids().begin() + 1, data.time_ids().end());
  auto names = data.covariate_names();
  names.emplace_back("y_lag");
  return PanelDataset(n, periods - 1, std::move(y), std::move(x), data.region_ids(), std::move(times), std::move(names));
}

}  // namespace psar
