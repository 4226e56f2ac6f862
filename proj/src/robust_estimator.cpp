#include "psar/robust_estimator.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "psar/error.hpp"

namespace psar {

namespace {

constexpr double kPruneTolerance = 1e-10;

double condition_of_symmetric(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (m + m.transpose()),
                                                                             Eigen::EigenvaluesOnly)
                                 .eigenvalues();
  const double lo = ev.cwiseAbs().minCoeff();
  const double hi = ev.cwiseAbs().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace

std::string InstrumentSource::describe(const std::vector<std::string>& covariate_names,
                                       const std::vector<std::string>& region_ids) const {
  std::ostringstream os;
  const auto c = static_cast<std::size_t>(covariate);
  const std::string name = c < covariate_names.size() ? covariate_names[c] : "x" + std::to_string(covariate);
  std::string lagged = power == 0 ? name : (power == 1 ? "W*" : "W^" + std::to_string(power) + "*") + name;
  if (region >= 0) {
    const auto r = static_cast<std::size_t>(region);
    const std::string rid = r < region_ids.size() ? region_ids[r] : std::to_string(region);
    os << "D[" << rid << "](" << lagged << ")";
  } else {
    os << lagged;
  }
  return os.str();
}

InstrumentSet::InstrumentSet(const Eigen::MatrixXd& candidates, std::vector<InstrumentSource> sources, int q) : q_(q) {
  if (static_cast<Eigen::Index>(sources.size()) != candidates.cols())
    throw InputError("instrument provenance count does not match columns");
  Eigen::MatrixXd basis(candidates.rows(), candidates.cols());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < candidates.cols(); ++c) {
    Eigen::VectorXd v = candidates.col(c);
    const double norm0 = v.norm();
    if (!(norm0 > 0.0)) continue;
    const auto kept = static_cast<Eigen::Index>(keep.size());
    for (int pass = 0; pass < 2; ++pass) {
      if (kept > 0) v -= basis.leftCols(kept) * (basis.leftCols(kept).transpose() * v);
    }
    const double norm = v.norm();
    if (norm <= kPruneTolerance * norm0) continue;
    basis.col(kept) = v / norm;
    keep.push_back(c);
  }
  const auto l = static_cast<Eigen::Index>(keep.size());
  basis_ = basis.leftCols(l);
  h_.resize(candidates.rows(), l);
  for (Eigen::Index j = 0; j < l; ++j) {
    h_.col(j) = candidates.col(keep[static_cast<std::size_t>(j)]);
    kept_.push_back(sources[static_cast<std::size_t>(keep[static_cast<std::size_t>(j)])]);
  }
}

double InstrumentSet::gram_condition() const { return condition_of_symmetric(h_.transpose() * h_); }

Eigen::MatrixXd build_D(const WeightsMatrix& w, const PanelDataset& data) {
  data.require_compatible(w);
  const Eigen::Index n = w.n();
  const Eigen::Index periods = data.periods();
  Eigen::MatrixXd d(data.rows(), n);
  const auto y = data.y_matrix();
  for (Eigen::Index t = 0; t < periods; ++t) d.middleRows(t * n, n) = w.matrix() * y.col(t).asDiagonal();
  return d;
}

InstrumentSet build_instruments(const PanelDataset& data, const WeightsMatrix& w, int q, InstrumentScope scope) {
  if (q < 2) throw InputError("instrument order q must be at least 2");
  data.require_compatible(w);
  const Eigen::Index n = w.n();
  const Eigen::Index k = data.k();
  const Eigen::Index periods = data.periods();

  Eigen::MatrixXd lag_block(data.rows(), k * (q + 1));
  std::vector<InstrumentSource> lag_sources;
  Eigen::MatrixXd lagged = data.x();
  for (int j = 0; j <= q; ++j) {
    if (j > 0) lagged = spatial_lag(w, lagged, 1);
    lag_block.middleCols(j * k, k) = lagged;
    for (Eigen::Index c = 0; c < k; ++c) lag_sources.push_back({j, c, -1});
  }
  InstrumentSet lags(lag_block, lag_sources, q);
  if (lags.size() <= k)
    throw InputError("under-identified: increase q or covariates (spatial lags of X add no rank beyond X)");
  if (scope == InstrumentScope::spatial_lags) {
    if (lags.size() < k + n)
      throw InputError("under-identified: increase q or covariates (" + std::to_string(lags.size()) +
                       " instruments for " + std::to_string(k + n) + " coefficients)");
    return lags;
  }

  std::vector<Eigen::Index> sources_for_d;
  for (Eigen::Index c = 0; c < lags.size(); ++c) {
    if (lags.kept_columns()[static_cast<std::size_t>(c)].power < q) sources_for_d.push_back(c);
  }
  const auto m = static_cast<Eigen::Index>(sources_for_d.size());
  Eigen::MatrixXd all(data.rows(), lags.size() + n * m);
  all.leftCols(lags.size()) = lags.h();
  std::vector<InstrumentSource> sources = lags.kept_columns();
  Eigen::Index col = lags.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const Eigen::Index s : sources_for_d) {
      const auto& src = lags.kept_columns()[static_cast<std::size_t>(s)];
      for (Eigen::Index t = 0; t < periods; ++t)
        all.block(t * n, col, n, 1) = w.matrix().col(i) * lags.h()(t * n + i, s);
      sources.push_back({src.power, src.covariate, i});
      ++col;
    }
  }
  InstrumentSet out(all, std::move(sources), q);
  if (out.size() < k + n)
    throw InputError("under-identified: increase q or covariates (" + std::to_string(out.size()) +
                     " instruments for " + std::to_string(k + n) + " coefficients)");
  return out;
}

Eigen::VectorXd projection_apply(const InstrumentSet& h, const Eigen::VectorXd& v) {
  if (v.size() != h.basis().rows()) throw InputError("vector length does not match instrument rows");
  return h.basis() * (h.basis().transpose() * v);
}

Eigen::MatrixXd projection_apply(const InstrumentSet& h, const Eigen::MatrixXd& m) {
  if (m.rows() != h.basis().rows()) throw InputError("matrix rows do not match instrument rows");
  return h.basis() * (h.basis().transpose() * m);
}

RobustFit fit_robust(const PanelDataset& data, const WeightsMatrix& w, int q, InstrumentScope scope) {
  return fit_robust(data, w, build_instruments(data, w, q, scope));
}

RobustFit fit_robust(const PanelDataset& data, const WeightsMatrix& w, const InstrumentSet& instruments) {
  data.require_compatible(w);
  if (instruments.basis().rows() != data.rows()) throw InputError("instrument rows do not match the panel");
  const Eigen::Index k = data.k();
  const Eigen::Index n = w.n();
  const Eigen::Index p = k + n;

  const Eigen::MatrixXd d = build_D(w, data);
  Eigen::MatrixXd z_hat(data.rows(), p);  // P_H [X, D]
  z_hat.leftCols(k) = projection_apply(instruments, data.x());
  z_hat.rightCols(n) = projection_apply(instruments, d);
  Eigen::MatrixXd z_struct(data.rows(), p);
  z_struct << data.x(), d;

  const Eigen::MatrixXd normal = z_hat.transpose() * z_struct;  // (P_H Z)^T Z
  RobustFitDiagnostics diag;
  diag.instrument_gram_condition = instruments.gram_condition();
  diag.normal_matrix_condition = condition_of_symmetric(normal);
  diag.instrument_count = instruments.size();
  if (!std::isfinite(diag.normal_matrix_condition) || diag.normal_matrix_condition > 1e14) {
    std::ostringstream os;
    os << "singular (P_H Z)^T Z: cond = " << diag.normal_matrix_condition
       << ", cond(H^T H) = " << diag.instrument_gram_condition << ", L = " << diag.instrument_count;
    throw NumericalError(os.str());
  }

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(normal);
  RobustFit fit;
  fit.k = k;
  fit.q = instruments.q();
  fit.kept_columns = instruments.kept_columns();
  fit.diagnostics = diag;
  fit.delta_hat = lu.solve(z_hat.transpose() * data.y());

  const Eigen::VectorXd resid = data.y() - z_struct * fit.delta_hat;
  fit.sigma2_hat = resid.squaredNorm() / static_cast<double>(data.rows());
  // delta_hat - delta = B eps with B = [(P_H Z)^T Z]^{-1} (P_H Z)^T.
  const Eigen::MatrixXd bt = lu.solve(z_hat.transpose()).transpose();  // B^T, nT x p
  const Eigen::MatrixXd weighted = resid.cwiseAbs2().asDiagonal() * bt;
  Eigen::MatrixXd cov = bt.transpose() * weighted;
  fit.cov = 0.5 * (cov + cov.transpose());
  Eigen::MatrixXd lit = bt.transpose() * bt / static_cast<double>(data.periods());
  fit.cov_literal = 0.5 * (lit + lit.transpose());

  fit.rho_in_range.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) fit.rho_in_range[static_cast<std::size_t>(i)] = std::abs(fit.delta_hat(k + i)) < 1.0;
  return fit;
}

}  // namespace psar
