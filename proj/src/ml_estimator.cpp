#include "psar/ml_estimator.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "psar/error.hpp"
#include "psar/robust_estimator.hpp"

namespace psar {

namespace {

constexpr double kRhoBound = 1.0 - 1e-6;
constexpr double kArmijo = 0.1;

RhoVector clamp_rho(const RhoVector& rho) { return rho.cwiseMax(-kRhoBound).cwiseMin(kRhoBound); }

}  // namespace

void ScoringConfig::validate() const {
  if (!(epsilon > 0.0)) throw InputError("scoring tolerance must be positive");
  if (!(score_tolerance > 0.0)) throw InputError("score tolerance must be positive");
  if (max_iterations < 1) throw InputError("max_iterations must be at least 1");
  if (!(step_damping > 0.0 && step_damping <= 1.0)) throw InputError("step damping must lie in (0, 1]");
  if (!(newton_polish_below >= 0.0)) throw InputError("Newton polish threshold must be nonnegative");
  if (robust_q < 2) throw InputError("instrument order q must be at least 2");
}

Eigen::MatrixXd project_positive_definite(const Eigen::MatrixXd& m, double floor) {
  if (!m.allFinite()) throw NumericalError("information approximation failed: non-finite entries");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("information approximation failed: eigensolver");
  const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// ProfileLikelihood

struct ProfileLikelihood::Evaluation {
  Eigen::MatrixXd g;  // (I - W P)^{-1} W
  double log_det = 0.0;
  Eigen::VectorXd ay;
  Eigen::VectorXd resid;  // (I - H) A Y
  double ssr = 0.0;
  Eigen::MatrixXd d;  // only when requested
};

ProfileLikelihood::ProfileLikelihood(const PanelDataset& data, const WeightsMatrix& w)
    : data_(data), w_(w), qr_(data.x()) {
  data_.require_compatible(w_);
  q_ = qr_.householderQ() * Eigen::MatrixXd::Identity(data_.rows(), data_.k());
}

Eigen::VectorXd ProfileLikelihood::residual_maker(const Eigen::VectorXd& v) const {
  return v - q_ * (q_.transpose() * v);
}

ProfileLikelihood::Evaluation ProfileLikelihood::evaluate(const RhoVector& rho, bool need_d) const {
  require_stationary(rho, w_);
  Evaluation ev;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(spatial_filter_matrix(rho, w_));
  ev.log_det = log_det_A(rho, w_, data_.periods());
  ev.g = lu.solve(w_.matrix());
  ev.ay = apply_A(rho, w_, data_.y());
  ev.resid = residual_maker(ev.ay);
  ev.ssr = ev.resid.squaredNorm();
  // A residual below rounding level of A Y is an exact fit.
  if (!(ev.ssr > 1e-24 * ev.ay.squaredNorm()) || !std::isfinite(ev.ssr)) {
    throw NumericalError("degenerate fit: zero residual sum of squares");
  }
  if (need_d) ev.d = build_D(w_, data_);
  return ev;
}

Eigen::VectorXd ProfileLikelihood::beta(const RhoVector& rho) const {
  return qr_.solve(apply_A(rho, w_, data_.y()));
}

double ProfileLikelihood::sigma2(const RhoVector& rho, const Eigen::VectorXd& beta) const {
  const Eigen::VectorXd r = apply_A(rho, w_, data_.y()) - data_.x() * beta;
  return r.squaredNorm() / static_cast<double>(data_.rows());
}

double ProfileLikelihood::loglik(const RhoVector& rho) const {
  const auto ev = evaluate(rho, false);
  const double nt = static_cast<double>(data_.rows());
  return -0.5 * nt * std::log(ev.ssr / nt) + ev.log_det - 0.5 * nt * (1.0 + std::log(2.0 * std::numbers::pi));
}

Eigen::VectorXd ProfileLikelihood::score(const RhoVector& rho) const {
  const auto ev = evaluate(rho, false);
  const double nt = static_cast<double>(data_.rows());
  const double periods = static_cast<double>(data_.periods());
  Eigen::Map<const Eigen::MatrixXd> e(ev.resid.data(), data_.n(), data_.periods());
  // (D^T e)_i = sum_t y_it (W^T e_t)_i
  const Eigen::VectorXd dte = (data_.y_matrix().array() * (w_.matrix().transpose() * e).array()).rowwise().sum();
  return (nt / ev.ssr) * dte - periods * ev.g.diagonal();
}

Eigen::MatrixXd ProfileLikelihood::hessian(const RhoVector& rho) const {
  const auto ev = evaluate(rho, true);
  const double nt = static_cast<double>(data_.rows());
  const double periods = static_cast<double>(data_.periods());
  const Eigen::MatrixXd qtd = q_.transpose() * ev.d;
  const Eigen::MatrixXd drd = ev.d.transpose() * ev.d - qtd.transpose() * qtd;
  const Eigen::VectorXd dte = ev.d.transpose() * ev.resid;
  Eigen::MatrixXd h = -(nt / ev.ssr) * drd + (2.0 * nt / (ev.ssr * ev.ssr)) * dte * dte.transpose();
  h.array() -= periods * (ev.g.array() * ev.g.transpose().array());
  return 0.5 * (h + h.transpose());
}

// The negative Hessian is
//   nT X/s - 2 nT N/s^2 + T (G o G^T),
// with s = e^T e, X = D^T (I-H) D and N = (D^T e)(D^T e)^T. Under the model at
// the evaluation point, u = A Y ~ N(X beta, sigma^2 I), D_i = F_i u with
// F_i = I_T (x) W e_i e_i^T (I - W P)^{-1}, and e = (I-H) u, so X, N and s are
// (products of) Gaussian quadratic forms in u. Their first two moments are
// exact; E[X/s] and E[N/s^2] then follow from the second-order expansions
//   E[X/Y]   ~ EX/EY - Cov/EY^2 + Var(Y) EX/EY^3
//   E[X/Y^2] ~ EX/EY^2 - 2 Cov/EY^3 + 3 Var(Y) EX/EY^4.
// Every trace reduces to n x n and K x K quantities because F_i is rank one per
// period block and H = Q Q^T has rank K.
Eigen::MatrixXd ProfileLikelihood::expected_information_raw(const RhoVector& rho, const Eigen::VectorXd& beta,
                                                            double sigma2) const {
  require_stationary(rho, w_);
  if (!(sigma2 > 0.0)) throw InputError("sigma2 must be positive");
  if (beta.size() != data_.k()) throw InputError("beta length does not match K");

  const Eigen::Index n = data_.n();
  const Eigen::Index periods = data_.periods();
  const Eigen::Index k = data_.k();
  const double nt = static_cast<double>(data_.rows());
  const double t = static_cast<double>(periods);
  const Eigen::MatrixXd& w = w_.matrix();

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(spatial_filter_matrix(rho, w_));
  const Eigen::MatrixXd minv = lu.inverse();
  const Eigen::MatrixXd g = minv * w;
  const Eigen::MatrixXd wtw = w.transpose() * w;
  const Eigen::MatrixXd mmt = minv * minv.transpose();

  Eigen::MatrixXd s_alpha = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd s_pi = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd s_pa = Eigen::MatrixXd::Zero(n, n);
  std::vector<Eigen::MatrixXd> z(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(k, k));
  const Eigen::VectorXd mu = data_.x() * beta;
  Eigen::MatrixXd f_mu(data_.rows(), n);
  for (Eigen::Index p = 0; p < periods; ++p) {
    const auto qt = q_.middleRows(p * n, n);
    const Eigen::MatrixXd alpha = w.transpose() * qt;
    const Eigen::MatrixXd pi = minv * qt;
    s_alpha.noalias() += alpha * alpha.transpose();
    s_pi.noalias() += pi * pi.transpose();
    s_pa.noalias() += pi * alpha.transpose();
    for (Eigen::Index i = 0; i < n; ++i) z[static_cast<std::size_t>(i)].noalias() += alpha.row(i).transpose() * pi.row(i);
    const Eigen::VectorXd m_mu = minv * mu.segment(p * n, n);
    f_mu.middleRows(p * n, n) = w * m_mu.asDiagonal();
  }
  const Eigen::MatrixXd b = f_mu - q_ * (q_.transpose() * f_mu);
  const Eigen::MatrixXd bb = b.transpose() * b;

  Eigen::VectorXd tau(n);
  for (Eigen::Index i = 0; i < n; ++i) tau(i) = t * g(i, i) - z[static_cast<std::size_t>(i)].trace();

  const double s2 = sigma2;
  const double dof = nt - static_cast<double>(k);
  const double es = s2 * dof;
  const double vs = 2.0 * s2 * s2 * dof;

  Eigen::MatrixXd info(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& zi = z[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& zj = z[static_cast<std::size_t>(j)];
      const double uu = mmt(i, j) * s_alpha(i, j);
      const double vv = wtw(i, j) * s_pi(i, j);
      const double xi_ij = g(i, j) * s_pa(j, i);
      const double xi_ji = g(j, i) * s_pa(i, j);
      const double tr_ftf = t * wtw(i, j) * mmt(i, j);
      const double tr_zz = (zi.array() * zj.transpose().array()).sum();  // tr(Z_i Z_j)
      const double tr_ztz = (zi.array() * zj.array()).sum();             // tr(Z_i^T Z_j)
      const double t3 = tr_ftf - uu;                                      // tr(F_i^T R F_j)
      const double t4 = tr_ftf - uu - vv + tr_ztz;                        // tr(F_i^T R F_j R)
      const double t6 = t * g(i, j) * g(j, i) - xi_ji - xi_ij + tr_zz;    // tr(F_i R F_j R)
      const double tr_bb = 0.5 * (t6 + t3);
      const double tr_bbr = 0.25 * (2.0 * t6 + t4 + t3);

      const double ex = bb(i, j) + s2 * t3;
      const double cov_xs = 2.0 * s2 * s2 * t4;
      const double en = s2 * bb(i, j) + s2 * s2 * (tau(i) * tau(j) + 2.0 * tr_bb);
      const double cov_ns = 2.0 * s2 * s2 * bb(i, j) + s2 * s2 * s2 * (4.0 * tau(i) * tau(j) + 8.0 * tr_bbr);

      const double e_ratio = ex / es - cov_xs / (es * es) + vs * ex / (es * es * es);
      const double e_ratio2 =
          en / (es * es) - 2.0 * cov_ns / (es * es * es) + 3.0 * vs * en / (es * es * es * es);
      info(i, j) = nt * e_ratio - 2.0 * nt * e_ratio2 + t * g(i, j) * g(j, i);
    }
  }
  if (!info.allFinite()) throw NumericalError("information approximation failed: non-finite entries");
  return info;
}

Eigen::MatrixXd ProfileLikelihood::expected_information(const RhoVector& rho, const Eigen::VectorXd& beta,
                                                        double sigma2) const {
  return project_positive_definite(expected_information_raw(rho, beta, sigma2));
}

// ---------------------------------------------------------------------------
// Free functions

Eigen::VectorXd beta_given_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho) {
  require_stationary(rho, w);
  return ProfileLikelihood(data, w).beta(rho);
}

double sigma2_given(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho,
                    const Eigen::VectorXd& beta) {
  require_stationary(rho, w);
  data.require_compatible(w);
  if (beta.size() != data.k()) throw InputError("beta length does not match K");
  const Eigen::VectorXd r = apply_A(rho, w, data.y()) - data.x() * beta;
  return r.squaredNorm() / static_cast<double>(data.rows());
}

double concentrated_loglik(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho) {
  return ProfileLikelihood(data, w).loglik(rho);
}

Eigen::VectorXd score_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho) {
  return ProfileLikelihood(data, w).score(rho);
}

Eigen::MatrixXd hessian_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho) {
  return ProfileLikelihood(data, w).hessian(rho);
}

Eigen::MatrixXd fisher_info_rho(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho,
                                const Eigen::VectorXd& beta, double sigma2) {
  return ProfileLikelihood(data, w).expected_information(rho, beta, sigma2);
}

Eigen::MatrixXd beta_covariance(const PanelDataset& data, const WeightsMatrix& w, const RhoVector& rho,
                                double sigma2) {
  data.require_compatible(w);
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw InputError("sigma2 must be finite and nonnegative");
  if (rho.size() != w.n() || !rho.allFinite()) throw InputError("rho must be finite with length n");
  const Eigen::MatrixXd& x = data.x();
  const Eigen::LDLT<Eigen::MatrixXd> xtx(x.transpose() * x);
  const Eigen::MatrixXd atx = apply_A_transpose(rho, w, x);
  const Eigen::MatrixXd bread = xtx.solve(atx.transpose() * atx);  // (X'X)^{-1} X'AA'X
  Eigen::MatrixXd cov = sigma2 * xtx.solve(bread.transpose()).transpose();
  return 0.5 * (cov + cov.transpose());
}

// ---------------------------------------------------------------------------
// Fisher scoring

namespace {

Eigen::MatrixXd information_at(const ProfileLikelihood& lik, const RhoVector& rho, const ScoringConfig& config) {
  if (config.information == InformationKind::observed) return project_positive_definite(-lik.hessian(rho));
  const Eigen::VectorXd beta = lik.beta(rho);
  const double sigma2 = lik.sigma2(rho, beta);
  const Eigen::MatrixXd raw = lik.expected_information_raw(rho, beta, sigma2);
  if (config.fallback_to_observed) {
    const Eigen::MatrixXd sym = 0.5 * (raw + raw.transpose());
    if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() <= 1e-8) {
      const Eigen::MatrixXd observed = -lik.hessian(rho);
      const Eigen::MatrixXd osym = 0.5 * (observed + observed.transpose());
      if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(osym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() > 1e-8)
        return osym;
    }
  }
  return project_positive_definite(raw);
}

double safe_loglik(const ProfileLikelihood& lik, const RhoVector& rho) {
  try {
    return lik.loglik(rho);
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

RhoVector initial_rho(const PanelDataset& data, const WeightsMatrix& w, const ScoringConfig& config) {
  switch (config.init) {
    case RhoInit::zeros:
      return RhoVector::Zero(w.n());
    case RhoInit::explicit_value:
      if (config.rho_init.size() != w.n()) throw InputError("rho_init has the wrong length");
      if (!config.rho_init.allFinite()) throw InputError("rho_init must be finite");
      return clamp_rho(config.rho_init);
    case RhoInit::robust:
      return clamp_rho(fit_robust(data, w, config.robust_q).rho());
  }
  return RhoVector::Zero(w.n());
}

// Coordinates on the clamp bound whose score points out of the parameter space.
std::vector<bool> pinned_at_bound(const RhoVector& rho, const Eigen::VectorXd& score) {
  std::vector<bool> pinned(static_cast<std::size_t>(rho.size()), false);
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    const bool upper = rho(i) >= kRhoBound && score(i) > 0.0;
    const bool lower = rho(i) <= -kRhoBound && score(i) < 0.0;
    pinned[static_cast<std::size_t>(i)] = upper || lower;
  }
  return pinned;
}

Eigen::VectorXd projected(const Eigen::VectorXd& score, const std::vector<bool>& pinned) {
  Eigen::VectorXd out = score;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (pinned[static_cast<std::size_t>(i)]) out(i) = 0.0;
  }
  return out;
}

bool positive_definite_on(const Eigen::MatrixXd& m, const std::vector<bool>& pinned) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!pinned[static_cast<std::size_t>(i)]) free.push_back(i);
  }
  if (free.empty()) return true;
  const auto k = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = m(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
  }
  return Eigen::LLT<Eigen::MatrixXd>(sub).info() == Eigen::Success;
}

// Scoring step on the free coordinates; pinned ones stay where they are.
Eigen::VectorXd free_step(const Eigen::MatrixXd& info, const Eigen::VectorXd& score, const std::vector<bool>& pinned) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < score.size(); ++i) {
    if (!pinned[static_cast<std::size_t>(i)]) free.push_back(i);
  }
  Eigen::VectorXd step = Eigen::VectorXd::Zero(score.size());
  if (free.empty()) return step;
  const auto m = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd sub(m, m);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    rhs(a) = score(free[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = info(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
  }
  const Eigen::VectorXd solved = sub.ldlt().solve(rhs);
  for (Eigen::Index a = 0; a < m; ++a) step(free[static_cast<std::size_t>(a)]) = solved(a);
  return step;
}

}  // namespace

MlFit fit_ml(const PanelDataset& data, const WeightsMatrix& w, const ScoringConfig& config) {
  config.validate();
  data.require_compatible(w);
  const ProfileLikelihood lik(data, w);

  MlFit fit;
  fit.config = config;
  RhoVector rho = initial_rho(data, w, config);
  double ll = lik.loglik(rho);
  if (!std::isfinite(ll)) throw NumericalError("non-finite likelihood at the initial value");
  fit.trace.push_back({0, rho, ll});

  Eigen::VectorXd score = lik.score(rho);
  double last_change = std::numeric_limits<double>::infinity();
  int iteration = 0;
  while (true) {
    const std::vector<bool> pinned = pinned_at_bound(rho, score);
    if (last_change < config.epsilon && projected(score, pinned).lpNorm<Eigen::Infinity>() < config.score_tolerance) {
      fit.converged = true;
      break;
    }
    if (iteration >= config.max_iterations) break;
    ++iteration;

    Eigen::MatrixXd info = information_at(lik, rho, config);
    if (config.information == InformationKind::expected && last_change < config.newton_polish_below) {
      Eigen::MatrixXd observed = -lik.hessian(rho);
      observed = 0.5 * (observed + observed.transpose());
      if (positive_definite_on(observed, pinned)) info = std::move(observed);
    }
    const Eigen::VectorXd step = config.step_damping * free_step(info, score, pinned);
    if (!step.allFinite()) throw NumericalError("scoring step is not finite");
    if (step.lpNorm<Eigen::Infinity>() == 0.0) {
      last_change = 0.0;
      continue;
    }

    double scale = 1.0;
    RhoVector candidate;
    double candidate_ll = std::numeric_limits<double>::quiet_NaN();
    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving) {
      candidate = clamp_rho(rho + scale * step);
      candidate_ll = safe_loglik(lik, candidate);
      // Sufficient increase: at least a tenth of the linear prediction, up to rounding.
      const double predicted = score.dot(candidate - rho);
      if (std::isfinite(candidate_ll) &&
          candidate_ll - ll >= kArmijo * predicted - 1e-10 * (1.0 + std::abs(ll))) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      if (!std::isfinite(candidate_ll)) throw NumericalError("scoring step produced a non-finite likelihood");
      // No ascent along the scoring direction; stop here and report the state.
      break;
    }
    last_change = (candidate - rho).lpNorm<Eigen::Infinity>();
    rho = candidate;
    ll = candidate_ll;
    score = lik.score(rho);
    fit.trace.push_back({iteration, rho, ll});
  }

  fit.iterations = iteration;
  fit.rho_hat = rho;
  fit.at_bound = pinned_at_bound(rho, score);
  fit.loglik = ll;
  fit.score = score;
  fit.beta_hat = lik.beta(rho);
  fit.sigma2_hat = lik.sigma2(rho, fit.beta_hat);
  fit.rho_info = information_at(lik, rho, config);
  Eigen::MatrixXd cov = fit.rho_info.ldlt().solve(Eigen::MatrixXd::Identity(w.n(), w.n()));
  fit.rho_cov = 0.5 * (cov + cov.transpose());
  fit.beta_cov = beta_covariance(data, w, rho, fit.sigma2_hat);
  return fit;
}

}  // namespace psar
