// Acceptance checks. Each criterion prints one PASS/FAIL line; with a name
// argument only that criterion runs. Exit status is nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "psar/error.hpp"
#include "psar/inference.hpp"
#include "psar/io.hpp"
#include "psar/ml_estimator.hpp"
#include "psar/robust_estimator.hpp"
#include "psar/simulation.hpp"
#include "support.hpp"

namespace {

using psar::EstimatorKind;
using psar::testing::dense_A;
using psar::testing::max_rel_error;

constexpr std::uint64_t kSeed = 20240601;

using LdMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double rel_norm_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

// ---------------------------------------------------------------------------

Outcome gradient_hessian() {
  constexpr double kScoreTol = 1e-5;
  constexpr double kHessianTol = 1e-4;
  constexpr double kStep = 1e-6;
  std::mt19937_64 rng(kSeed);
  std::uniform_int_distribution<int> dim(2, 5);
  double worst_score = 0.0, worst_hessian = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Eigen::Index n = dim(rng);
    const Eigen::Index periods = dim(rng);
    const auto w = psar::testing::random_weights(n, rng);
    const Eigen::VectorXd truth = psar::testing::random_rho(n, 0.8, rng);
    const auto data = psar::testing::random_panel(w, periods, 2, truth, rng);
    const Eigen::VectorXd rho = psar::testing::random_rho(n, 0.8, rng);
    const psar::ProfileLikelihood lik(data, w);
    Eigen::VectorXd g_fd(n);
    Eigen::MatrixXd h_fd(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd up = rho, down = rho;
      up(i) += kStep;
      down(i) -= kStep;
      g_fd(i) = (lik.loglik(up) - lik.loglik(down)) / (2.0 * kStep);
      h_fd.col(i) = (lik.score(up) - lik.score(down)) / (2.0 * kStep);
    }
    worst_score = std::max(worst_score, rel_norm_error(lik.score(rho), g_fd));
    worst_hessian = std::max(worst_hessian, rel_norm_error(lik.hessian(rho), h_fd));
  }
  return {worst_score < kScoreTol && worst_hessian < kHessianTol,
          "50 instances, max score rel err " + fmt(worst_score) + " (tol " + fmt(kScoreTol) + "), max Hessian rel err " +
              fmt(worst_hessian) + " (tol " + fmt(kHessianTol) + ")"};
}

Outcome dense_oracle() {
  constexpr double kTol = 1e-10;
  std::mt19937_64 rng(kSeed);
  double worst[5] = {0, 0, 0, 0, 0};
  int instances = 0;
  int robust_instances = 0;
  for (int rep = 0; rep < 4; ++rep) {
    for (Eigen::Index n = 2; n <= 8; ++n) {
      for (Eigen::Index periods = 1; periods <= 4; ++periods) {
        ++instances;
        const auto w = psar::testing::random_weights(n, rng);
        const Eigen::VectorXd rho = psar::testing::random_rho(n, 0.95, rng);
        const auto data = psar::testing::random_panel(w, periods, 2, psar::testing::random_rho(n, 0.8, rng), rng);
        const Eigen::MatrixXd a = dense_A(rho, w.matrix(), periods);
        const Eigen::MatrixXd& x = data.x();
        const Eigen::VectorXd& y = data.y();

        worst[0] = std::max(worst[0], max_rel_error(psar::apply_A(rho, w, y), a * y));
        const double logdet = std::log(std::abs(a.fullPivLu().determinant()));
        worst[1] = std::max(worst[1], std::abs(psar::log_det_A(rho, w, periods) - logdet) / std::max(1.0, std::abs(logdet)));
        const Eigen::VectorXd beta = (x.transpose() * x).inverse() * x.transpose() * (a * y);
        worst[2] = std::max(worst[2], max_rel_error(psar::beta_given_rho(data, w, rho), beta));
        const double s2 = (a * y - x * beta).squaredNorm() / static_cast<double>(data.rows());
        worst[3] = std::max(worst[3], std::abs(psar::sigma2_given(data, w, rho, beta) - s2) / std::max(1.0, s2));

        psar::InstrumentSet h = [&] {
          try {
            return psar::build_instruments(data, w, 2);
          } catch (const psar::InputError&) {
            return psar::InstrumentSet(Eigen::MatrixXd(0, 0), {}, 2);
          }
        }();
        if (h.size() == 0) continue;  // under-identified: too few rows for K + n coefficients
        psar::RobustFit fit;
        try {
          fit = psar::fit_robust(data, w, h);
        } catch (const psar::NumericalError&) {
          continue;
        }
        ++robust_instances;
        // Extended precision: cond(H^T H) reaches 1e10 here, and the explicit
        // inverse in double would itself be off by more than the tolerance.
        Eigen::MatrixXd z(data.rows(), x.cols() + n);
        z << x, psar::build_D(w, data);
        const LdMatrix hl = h.h().cast<long double>();
        const LdMatrix p = hl * (hl.transpose() * hl).inverse() * hl.transpose();
        const LdMatrix zl = z.cast<long double>();
        const LdMatrix rhs = zl.transpose() * p * y.cast<long double>();
        const Eigen::VectorXd delta = LdMatrix(zl.transpose() * p * zl).fullPivLu().solve(rhs).cast<double>();
        worst[4] = std::max(worst[4], max_rel_error(fit.delta_hat, delta));
      }
    }
  }
  const char* names[5] = {"apply_A", "log_det_A", "beta_given_rho", "sigma2_given", "fit_robust"};
  bool pass = true;
  std::string detail = std::to_string(instances) + " instances (" + std::to_string(robust_instances) +
                       " identified for fit_robust), tol " + fmt(kTol) + ":";
  for (int i = 0; i < 5; ++i) {
    pass = pass && worst[i] < kTol;
    detail += std::string(" ") + names[i] + " " + fmt(worst[i]);
  }
  return {pass && robust_instances > 0, detail};
}

psar::McResult monte_carlo(psar::DgpConfig cfg, std::vector<EstimatorKind> est, int reps) {
  return psar::run_monte_carlo(cfg, est, reps);
}

std::string counts(const psar::McResult& r) {
  std::string out;
  for (const auto& c : r.summary.counts)
    out += psar::to_string(c.estimator) + " " + std::to_string(c.successes) + "/" + std::to_string(c.successes + c.failures) + " ";
  return out;
}

Outcome consistency() {
  constexpr double kBiasTol = 0.05;
  psar::DgpConfig cfg;
  cfg.seed = kSeed;
  cfg.periods = 10;
  const auto short_run = monte_carlo(cfg, {EstimatorKind::ml}, 100);
  cfg.periods = 50;
  const auto long_run = monte_carlo(cfg, {EstimatorKind::ml}, 100);
  const double m10 = short_run.summary.find(EstimatorKind::ml, "rho").median;
  const double m50 = long_run.summary.find(EstimatorKind::ml, "rho").median;
  double worst_bias = 0.0;
  for (int k = 0; k < 3; ++k)
    worst_bias = std::max(worst_bias, std::abs(long_run.summary.find(EstimatorKind::ml, "beta[" + std::to_string(k) + "]").bias));
  return {m50 <= 0.5 * m10 && worst_bias < kBiasTol,
          "median |rho err| T=10 " + fmt(m10) + ", T=50 " + fmt(m50) + " (ratio " + fmt(m50 / m10) +
              ", need <= 0.5); max |bias beta| T=50 " + fmt(worst_bias) + " (tol " + fmt(kBiasTol) + "); converged " +
              counts(short_run) + "/ " + counts(long_run)};
}

Outcome mse_dominance() {
  psar::DgpConfig cfg;
  cfg.seed = kSeed;
  cfg.periods = 100;
  const auto res = monte_carlo(cfg, {EstimatorKind::ml, EstimatorKind::robust}, 200);
  bool pass = true;
  std::string detail = "MSE ml vs robust:";
  for (const std::string p : {"beta[0]", "beta[1]", "beta[2]", "rho"}) {
    const double ml = res.summary.find(EstimatorKind::ml, p).mse;
    const double rb = res.summary.find(EstimatorKind::robust, p).mse;
    pass = pass && ml <= rb;
    detail += " " + p + " " + fmt(ml) + (ml <= rb ? " <= " : " > ") + fmt(rb) + ";";
  }
  return {pass, detail + " " + counts(res)};
}

Outcome robust_heteroskedastic() {
  constexpr double kBiasTol = 0.05;
  psar::DgpConfig cfg;
  cfg.seed = kSeed;
  cfg.n = 49;
  cfg.innovation = psar::GammaCenteredInnovation{};
  cfg.periods = 10;
  const auto short_run = monte_carlo(cfg, {EstimatorKind::robust}, 100);
  cfg.periods = 100;
  const auto long_run = monte_carlo(cfg, {EstimatorKind::robust}, 100);
  const double m10 = short_run.summary.find(EstimatorKind::robust, "rho").median;
  const double m100 = long_run.summary.find(EstimatorKind::robust, "rho").median;
  double worst_bias = 0.0;
  for (int k = 0; k < 3; ++k)
    worst_bias =
        std::max(worst_bias, std::abs(long_run.summary.find(EstimatorKind::robust, "beta[" + std::to_string(k) + "]").bias));
  return {m100 < m10 && worst_bias < kBiasTol,
          "median |rho err| T=10 " + fmt(m10) + ", T=100 " + fmt(m100) + "; max |bias beta| T=100 " + fmt(worst_bias) +
              " (tol " + fmt(kBiasTol) + "); " + counts(short_run) + "/ " + counts(long_run)};
}

// Rejection rate of the homogeneity test at level 0.05 over `reps` datasets.
std::pair<double, int> rejection_rate(const psar::DgpConfig& base, int reps) {
  const psar::RhoVector rho = psar::resolve_rho(base);
  int rejected = 0, used = 0;
  for (int r = 0; r < reps; ++r) {
    psar::DgpConfig cfg = base;
    cfg.rho = psar::RhoExplicit{rho};
    cfg.seed = psar::child_seed(base.seed, static_cast<std::uint64_t>(r) + 1);
    const auto g = psar::generate(cfg);
    const auto fit = psar::fit_ml(g.data, g.w);
    if (!fit.converged) continue;
    const auto common = psar::fit_common_rho(g.data, g.w);
    const auto test =
        psar::hotelling_homogeneity_test(common.rho0_hat, common.var_rho0, fit.rho_hat, fit.rho_cov, g.data.n(), g.data.periods());
    ++used;
    rejected += test.p_value < 0.05 ? 1 : 0;
  }
  return {used ? static_cast<double>(rejected) / used : 0.0, used};
}

Outcome homogeneity_test() {
  constexpr double kSizeLo = 0.02, kSizeHi = 0.12, kPower = 0.9;
  psar::DgpConfig cfg;
  cfg.seed = kSeed;
  cfg.periods = 100;
  cfg.rho = psar::RhoConstant{0.3};
  const auto [size, n_size] = rejection_rate(cfg, 200);
  cfg.rho = psar::RhoUniform{-0.5, 0.5};
  const auto [power, n_power] = rejection_rate(cfg, 200);
  const bool size_ok = size >= kSizeLo && size <= kSizeHi;
  return {size_ok && power > kPower, "size " + fmt(size) + " over " + std::to_string(n_size) + " fits (need [" + fmt(kSizeLo) +
                                         ", " + fmt(kSizeHi) + "]), power " + fmt(power) + " over " +
                                         std::to_string(n_power) + " fits (need > " + fmt(kPower) + ")"};
}

Outcome application() {
  const std::filesystem::path panel = std::filesystem::path(PSAR_DATA_DIR) / "us_homicide_panel.csv";
  const std::filesystem::path adjacency = std::filesystem::path(PSAR_DATA_DIR) / "us_states_adjacency.txt";
  if (!std::filesystem::exists(panel)) return {false, "US panel snapshot not bundled (" + panel.string() + " missing)"};

  psar::PanelCsvOptions opts;
  opts.intercept = true;
  const auto w = psar::read_weights(adjacency.string());
  const auto data = psar::add_response_lag(psar::align_to_weights(psar::load_panel(panel.string(), opts), w));
  const auto lag = static_cast<Eigen::Index>(data.covariate_names().size()) - 1;
  const auto ml = psar::fit_ml(data, w);
  const auto robust = psar::fit_robust(data, w);
  const auto imp = psar::impacts(ml.beta_hat, ml.rho_hat, w, psar::non_intercept_flags(data), data.covariate_names()).back();
  const auto common = psar::fit_common_rho(data, w);
  const auto test = psar::hotelling_homogeneity_test(common.rho0_hat, common.var_rho0, ml.rho_hat, ml.rho_cov, data.n(), data.periods());
  const bool pass = ml.converged && std::abs(ml.beta_hat(lag) - 0.7393) <= 0.02 && std::abs(ml.sigma2_hat - 0.8060) <= 0.05 &&
                    std::abs(imp.direct - 0.7442) <= 0.03 && std::abs(imp.indirect - 0.2013) <= 0.03 &&
                    std::abs(imp.total - 0.9454) <= 0.03 && std::abs(robust.beta()(lag) - 0.7229) <= 0.02 && test.t2 > 1e5 &&
                    test.p_value < 1e-4;
  return {pass, "ml lag " + fmt(ml.beta_hat(lag)) + ", sigma2 " + fmt(ml.sigma2_hat) + ", impacts (" + fmt(imp.direct) + ", " +
                    fmt(imp.indirect) + ", " + fmt(imp.total) + "), robust lag " + fmt(robust.beta()(lag)) + ", T2 " +
                    fmt(test.t2) + ", p " + fmt(test.p_value)};
}

struct Criterion {
  std::string name;
  double time_limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"gradient_hessian", 30, gradient_hessian},
      {"dense_oracle", 60, dense_oracle},
      {"consistency", 600, consistency},
      {"mse_dominance", 900, mse_dominance},
      {"robust_heteroskedastic", 900, robust_heteroskedastic},
      {"homogeneity_test", 900, homogeneity_test},
      {"application", 300, application},
  };
  const std::string only = argc > 1 ? argv[1] : "";
  int failures = 0;
  bool matched = false;
  for (const auto& c : criteria) {
    if (!only.empty() && c.name != only) continue;
    matched = true;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.time_limit_s;
    const bool pass = out.pass && in_time;
    failures += pass ? 0 : 1;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << out.detail << "; " << fmt(secs) << " s (limit "
              << fmt(c.time_limit_s) << " s)" << std::endl;
  }
  if (!matched) {
    std::cerr << "unknown criterion: " << only << "\n";
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
