#include "psar/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <thread>

#include "psar/error.hpp"
#include "psar/robust_estimator.hpp"

namespace psar {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kRhoStream = 0;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd eps;
  Eigen::VectorXd shape;
};

Eigen::MatrixXd draw_covariates(SplitMix64& rng, Eigen::Index rows) {
  std::normal_distribution<double> std_normal(0.0, 1.0);
  Eigen::MatrixXd x(rows, 3);
  x.col(0).setOnes();
  for (Eigen::Index r = 0; r < rows; ++r) x(r, 1) = std_normal(rng);
  for (Eigen::Index r = 0; r < rows; ++r) x(r, 2) = 2.0 + std_normal(rng);
  return x;
}

GeneratedPanel assemble(const DgpConfig& cfg, Design design) {
  const WeightsMatrix w = grid_weights(cfg.n, cfg.contiguity);
  const RhoVector rho = resolve_rho(cfg);
  if (rho.cwiseAbs().maxCoeff() >= 1.0) throw InputError("data generation requires |rho_i| < 1");
  const Eigen::VectorXd y = solve_A(rho, w, design.x * cfg.beta + design.eps);
  PanelDataset data(cfg.n, cfg.periods, y, design.x, w.region_ids(), {}, {"const", "x1", "x2"});
  return GeneratedPanel{std::move(data), w, rho, cfg.beta, std::move(design.eps), std::move(design.shape)};
}

}  // namespace

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t stream) {
  return SplitMix64::mix(seed ^ SplitMix64::mix(stream + kGolden));
}

void DgpConfig::validate() const {
  if (n < 2) throw InputError("simulation needs n >= 2");
  if (periods < 1) throw InputError("simulation needs T >= 1");
  if (beta.size() != 3) throw InputError("the simulated design has three columns: beta must have length 3");
  if (const auto* e = std::get_if<RhoExplicit>(&rho); e && e->values.size() != n)
    throw InputError("explicit rho must have length n");
  if (const auto* u = std::get_if<RhoUniform>(&rho); u && !(u->lo < u->hi))
    throw InputError("uniform rho range must satisfy lo < hi");
  if (const auto* nrm = std::get_if<NormalInnovation>(&innovation); nrm && !(nrm->sigma2 >= 0.0))
    throw InputError("innovation variance must be nonnegative");
}

std::pair<int, int> grid_shape(Eigen::Index n) {
  if (n < 2) throw InputError("grid needs at least two cells");
  int rows = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  while (rows > 1 && n % rows != 0) --rows;
  return {rows, static_cast<int>(n / rows)};
}

WeightsMatrix grid_weights(Eigen::Index n, Contiguity contiguity) {
  const auto [rows, cols] = grid_shape(n);
  return build_rook_grid_weights(rows, cols, contiguity);
}

RhoVector resolve_rho(const DgpConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = cfg.n;
  return std::visit(overloaded{
                        [&](const RhoExplicit& e) -> RhoVector { return e.values; },
                        [&](const RhoConstant& c) -> RhoVector { return RhoVector::Constant(n, c.value); },
                        [&](const RhoGrid&) -> RhoVector {
                          RhoVector r(n);
                          for (Eigen::Index i = 0; i < n; ++i) r(i) = -0.9 + 0.1 * static_cast<double>(i % 19);
                          return r;
                        },
                        [&](const RhoUniform& u) -> RhoVector {
                          SplitMix64 rng(child_seed(cfg.seed, kRhoStream));
                          std::uniform_real_distribution<double> dist(u.lo, u.hi);
                          RhoVector r(n);
                          for (Eigen::Index i = 0; i < n; ++i) r(i) = dist(rng);
                          return r;
                        },
                    },
                    cfg.rho);
}

GeneratedPanel generate_homoskedastic(const DgpConfig& cfg) {
  cfg.validate();
  const auto* normal = std::get_if<NormalInnovation>(&cfg.innovation);
  if (!normal) throw InputError("homoskedastic generator requires normal innovations");
  const Eigen::Index rows = cfg.n * cfg.periods;
  SplitMix64 rng(child_seed(cfg.seed, 1));
  Design design;
  design.x = draw_covariates(rng, rows);
  design.eps = Eigen::VectorXd::Zero(rows);
  if (normal->sigma2 > 0.0) {
    std::normal_distribution<double> dist(0.0, std::sqrt(normal->sigma2));
    for (Eigen::Index r = 0; r < rows; ++r) design.eps(r) = dist(rng);
  }
  return assemble(cfg, std::move(design));
}

GeneratedPanel generate_heteroskedastic(const DgpConfig& cfg) {
  cfg.validate();
  if (!std::holds_alternative<GammaCenteredInnovation>(cfg.innovation))
    throw InputError("heteroskedastic generator requires gamma_centered innovations");
  const Eigen::Index rows = cfg.n * cfg.periods;
  SplitMix64 rng(child_seed(cfg.seed, 1));
  Design design;
  design.x = draw_covariates(rng, rows);
  design.eps.resize(rows);
  design.shape.resize(rows);
  std::uniform_real_distribution<double> shape_dist(0.5, 1.5);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double v = shape_dist(rng);
    std::gamma_distribution<double> gamma(v, 1.0 / (2.0 * v));  // (shape, scale = 1/rate)
    design.shape(r) = v;
    design.eps(r) = gamma(rng) - 0.5;
  }
  return assemble(cfg, std::move(design));
}

GeneratedPanel generate(const DgpConfig& cfg) {
  if (std::holds_alternative<NormalInnovation>(cfg.innovation)) return generate_homoskedastic(cfg);
  return generate_heteroskedastic(cfg);
}

std::string to_string(EstimatorKind kind) { return kind == EstimatorKind::ml ? "ml" : "robust"; }

double sample_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

const McStat& McSummary::find(EstimatorKind estimator, const std::string& parameter) const {
  for (const auto& s : stats) {
    if (s.estimator == estimator && s.parameter == parameter) return s;
  }
  throw InputError("no Monte Carlo summary for " + to_string(estimator) + " / " + parameter);
}

namespace {

struct RepOutcome {
  std::vector<McRecord> records;
  std::vector<McFailure> failures;
};

RepOutcome run_replication(const DgpConfig& base, const RhoVector& rho, int rep,
                           const std::vector<EstimatorKind>& estimators, const McOptions& options) {
  DgpConfig cfg = base;
  cfg.rho = RhoExplicit{rho};
  cfg.seed = child_seed(base.seed, static_cast<std::uint64_t>(rep) + 1);
  RepOutcome out;
  std::optional<GeneratedPanel> gen;
  try {
    gen.emplace(generate(cfg));
  } catch (const std::exception& e) {
    for (auto est : estimators) out.failures.push_back({rep, est, std::string("data generation: ") + e.what()});
    return out;
  }
  for (auto est : estimators) {
    try {
      Eigen::VectorXd beta;
      RhoVector rho_hat;
      if (est == EstimatorKind::ml) {
        const MlFit fit = fit_ml(gen->data, gen->w, options.ml);
        if (!fit.converged) {
          out.failures.push_back({rep, est, "did not converge"});
          continue;
        }
        beta = fit.beta_hat;
        rho_hat = fit.rho_hat;
      } else {
        const RobustFit fit = fit_robust(gen->data, gen->w, options.q);
        beta = fit.beta();
        rho_hat = fit.rho();
      }
      for (Eigen::Index k = 0; k < beta.size(); ++k)
        out.records.push_back({rep, est, "beta[" + std::to_string(k) + "]", gen->beta(k), beta(k)});
      for (Eigen::Index i = 0; i < rho_hat.size(); ++i)
        out.records.push_back({rep, est, "rho[" + std::to_string(i) + "]", rho(i), rho_hat(i)});
    } catch (const std::exception& e) {
      out.failures.push_back({rep, est, e.what()});
    }
  }
  return out;
}

McStat summarize(EstimatorKind est, const std::string& parameter, const std::vector<double>& errors) {
  McStat s;
  s.estimator = est;
  s.parameter = parameter;
  s.count = errors.size();
  double sum = 0.0;
  double sq = 0.0;
  std::vector<double> abs_err;
  abs_err.reserve(errors.size());
  for (double e : errors) {
    sum += e;
    sq += e * e;
    abs_err.push_back(std::abs(e));
  }
  const double count = static_cast<double>(errors.size());
  s.bias = sum / count;
  s.mse = sq / count;
  s.q05 = sample_quantile(abs_err, 0.05);
  s.q25 = sample_quantile(abs_err, 0.25);
  s.median = sample_quantile(abs_err, 0.5);
  s.q75 = sample_quantile(abs_err, 0.75);
  s.q95 = sample_quantile(abs_err, 0.95);
  return s;
}

}  // namespace

McResult run_monte_carlo(const DgpConfig& cfg, const std::vector<EstimatorKind>& estimators, int reps,
                         const McOptions& options) {
  if (reps < 1) throw InputError("Monte Carlo needs at least one replication");
  if (estimators.empty()) throw InputError("Monte Carlo needs at least one estimator");
  options.ml.validate();
  const RhoVector rho = resolve_rho(cfg);

  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(reps));
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < reps; r = next++) outcomes[static_cast<std::size_t>(r)] = run_replication(cfg, rho, r, estimators, options);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  McResult result;
  for (auto& o : outcomes) {
    result.records.insert(result.records.end(), o.records.begin(), o.records.end());
    result.failures.insert(result.failures.end(), o.failures.begin(), o.failures.end());
  }

  McSummary& summary = result.summary;
  summary.replications = reps;
  bool any_success = false;
  for (auto est : estimators) {
    McEstimatorCount count{est, 0, 0};
    for (const auto& f : result.failures) count.failures += f.estimator == est ? 1 : 0;
    count.successes = reps - count.failures;
    summary.counts.push_back(count);
    if (count.successes == 0) continue;
    any_success = true;
    std::map<std::string, std::vector<double>> beta_err;
    std::vector<double> rho_err;
    std::vector<std::string> order;
    for (const auto& rec : result.records) {
      if (rec.estimator != est) continue;
      const double err = rec.estimate - rec.truth;
      if (rec.parameter.rfind("rho[", 0) == 0) {
        rho_err.push_back(err);
      } else {
        if (!beta_err.count(rec.parameter)) order.push_back(rec.parameter);
        beta_err[rec.parameter].push_back(err);
      }
    }
    for (const auto& name : order) summary.stats.push_back(summarize(est, name, beta_err[name]));
    summary.stats.push_back(summarize(est, "rho", rho_err));
  }
  if (!any_success) throw NumericalError("every Monte Carlo replication failed");
  return result;
}

}  // namespace psar
