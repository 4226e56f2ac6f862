// psar: fit, test and simulate spatial autoregressive panels with
// region-specific coefficients.
//
// Exit codes: 0 success, 1 input or usage error, 2 non-convergence or
// numerical failure (a fit report is still written when one exists).

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "psar/error.hpp"
#include "psar/inference.hpp"
#include "psar/io.hpp"
#include "psar/ml_estimator.hpp"
#include "psar/report.hpp"
#include "psar/robust_estimator.hpp"
#include "psar/simulation.hpp"
#include "psar/weights.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct DataArgs {
  std::string panel;
  std::string weights;
  bool intercept = false;
  bool lag = false;
};

struct FitArgs {
  DataArgs data;
  std::string estimator = "ml";
  int q = 2;
  double tol = 1e-8;
  int max_iter = 200;
  std::string init = "zeros";
  std::string information = "expected";
  bool impacts = false;
  bool homogeneity = false;
  std::string out;
  std::string params_csv;
  std::string rho_csv;
};

struct ImpactArgs {
  std::string report;
  std::string weights;
  std::string out;
};

struct SimArgs {
  long long n = 25;
  long long periods = 10;
  int reps = 100;
  std::string dgp = "normal";
  std::string rho = "grid";
  double sigma2 = 1.0;
  std::vector<std::string> estimators{"ml", "robust"};
  std::uint64_t seed = psar::DgpConfig{}.seed;
  int q = 2;
  unsigned threads = 0;
  std::string records;
  std::string summary;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--panel", a.panel, "panel CSV with columns region,time,y,<covariates>")->required()->check(CLI::ExistingFile);
  cmd->add_option("--weights", a.weights, "weights: dense .csv or adjacency list")->required()->check(CLI::ExistingFile);
  cmd->add_flag("--intercept", a.intercept, "prepend a constant column");
  cmd->add_flag("--lag", a.lag, "append the one-period lag of y as a covariate (drops the first period)");
}

struct Loaded {
  psar::PanelDataset data;
  psar::WeightsMatrix w;
};

Loaded load(const DataArgs& a) {
  psar::WeightsMatrix w = psar::read_weights(a.weights);
  psar::PanelDataset data = psar::load_panel(a.panel, {a.intercept});
  data = psar::align_to_weights(data, w);
  if (a.lag) data = psar::add_response_lag(data);
  return {std::move(data), std::move(w)};
}

void emit(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    psar::write_json(path, j);
  }
}

nlohmann::json options_echo(const FitArgs& a) {
  return {{"panel", a.data.panel},   {"weights", a.data.weights}, {"intercept", a.data.intercept},
          {"lag", a.data.lag},       {"estimator", a.estimator},  {"q", a.q},
          {"tol", a.tol},            {"max_iter", a.max_iter},    {"init", a.init},
          {"information", a.information}, {"impacts", a.impacts}, {"test_homogeneity", a.homogeneity}};
}

psar::HomogeneityTestReport homogeneity(const psar::PanelDataset& data, const psar::WeightsMatrix& w,
                                        const psar::RhoVector& rho_hat, const Eigen::MatrixXd& rho_cov) {
  const psar::CommonRhoFit common = psar::fit_common_rho(data, w);
  return psar::hotelling_homogeneity_test(common.rho0_hat, common.var_rho0, rho_hat, rho_cov, data.n(), data.periods());
}

// Index of the first coefficient outside (-1, 1), or -1.
Eigen::Index first_outside_unit(const psar::RhoVector& rho) {
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    if (!(std::abs(rho(i)) < 1.0)) return i;
  }
  return -1;
}

std::string outside_message(const psar::RhoVector& rho, const std::vector<std::string>& regions, Eigen::Index i) {
  return "rho[" + regions[static_cast<std::size_t>(i)] + "] = " + psar::format_double(rho(i)) + " lies outside (-1, 1)";
}

std::optional<psar::ImpactSummary> impacts_or_warn(const Eigen::VectorXd& beta, const psar::RhoVector& rho, const Loaded& in) {
  if (const auto i = first_outside_unit(rho); i >= 0) {
    std::cerr << "psar: impacts skipped: " << outside_message(rho, in.data.region_ids(), i) << "\n";
    return std::nullopt;
  }
  return psar::impacts(beta, rho, in.w, psar::non_intercept_flags(in.data), in.data.covariate_names());
}

int run_fit(const FitArgs& a, bool test_only) {
  const Loaded in = load(a.data);
  psar::ReportExtras extras;
  extras.moments = psar::covariate_moments(in.data);
  extras.options = options_echo(a);
  const bool want_test = a.homogeneity || test_only;

  if (a.estimator == "robust") {
    const psar::RobustFit fit = psar::fit_robust(in.data, in.w, a.q);
    if (a.impacts) extras.impacts = impacts_or_warn(fit.beta(), fit.rho(), in);
    if (want_test) extras.homogeneity = homogeneity(in.data, in.w, fit.rho(), fit.rho_cov());
    const auto report = psar::report_json(fit, in.data, extras);
    emit(test_only ? nlohmann::json{{"schema", psar::kReportSchema}, {"homogeneity", report["homogeneity"]}} : report, a.out);
    const auto wald = psar::wald_table(fit, in.data);
    if (!a.params_csv.empty()) psar::write_parameter_csv(a.params_csv, wald);
    if (!a.rho_csv.empty()) psar::write_rho_table_csv(a.rho_csv, wald);
    return kExitOk;
  }

  psar::ScoringConfig cfg;
  cfg.epsilon = a.tol;
  cfg.max_iterations = a.max_iter;
  cfg.init = a.init == "robust" ? psar::RhoInit::robust : psar::RhoInit::zeros;
  cfg.robust_q = a.q;
  cfg.information = a.information == "observed" ? psar::InformationKind::observed : psar::InformationKind::expected;
  const psar::MlFit fit = psar::fit_ml(in.data, in.w, cfg);
  if (fit.converged) {
    if (a.impacts) extras.impacts = impacts_or_warn(fit.beta_hat, fit.rho_hat, in);
    if (want_test) extras.homogeneity = homogeneity(in.data, in.w, fit.rho_hat, fit.rho_cov);
  }
  const auto report = psar::report_json(fit, in.data, extras);
  if (test_only && fit.converged) {
    emit({{"schema", psar::kReportSchema}, {"homogeneity", report["homogeneity"]}}, a.out);
  } else {
    emit(report, a.out);
  }
  const auto wald = psar::wald_table(fit, in.data);
  if (!a.params_csv.empty()) psar::write_parameter_csv(a.params_csv, wald);
  if (!a.rho_csv.empty()) psar::write_rho_table_csv(a.rho_csv, wald);
  if (!fit.converged) {
    std::cerr << "psar: Fisher scoring did not converge in " << fit.iterations << " iterations\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int run_impacts(const ImpactArgs& a) {
  const nlohmann::json report = psar::read_json(a.report);
  const psar::WeightsMatrix w = psar::read_weights(a.weights);
  Eigen::VectorXd beta;
  psar::RhoVector rho;
  if (report.at("estimator") == "ml") {
    const auto fit = psar::ml_fit_from_report(report);
    beta = fit.beta_hat;
    rho = fit.rho_hat;
  } else {
    const auto fit = psar::robust_fit_from_report(report);
    beta = fit.beta();
    rho = fit.rho();
  }
  const auto names = report.at("data").at("covariates").get<std::vector<std::string>>();
  const auto regions = report.at("data").at("regions").get<std::vector<std::string>>();
  if (regions != w.region_ids()) throw psar::InputError("weights regions do not match the report's regions");
  if (const auto i = first_outside_unit(rho); i >= 0)
    throw psar::InputError("impacts undefined: " + outside_message(rho, regions, i));
  std::vector<bool> flags;
  for (const auto& name : names) flags.push_back(name != "const");
  const auto summary = psar::impacts(beta, rho, w, flags, names);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& imp : summary)
    out.push_back({{"covariate", imp.covariate}, {"direct", imp.direct}, {"indirect", imp.indirect}, {"total", imp.total}});
  emit({{"schema", psar::kReportSchema}, {"impacts", out}}, a.out);
  return kExitOk;
}

psar::RhoSpec parse_rho_spec(const std::string& s) {
  if (s == "grid") return psar::RhoGrid{};
  if (s == "uniform") return psar::RhoUniform{};
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
  auto numbers = [&](const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw psar::InputError("--rho: not a number: '" + item + "'");
      }
    }
    return v;
  };
  if (kind == "constant") {
    const auto v = numbers(arg);
    if (v.size() != 1) throw psar::InputError("--rho constant:<value>");
    return psar::RhoConstant{v[0]};
  }
  if (kind == "uniform") {
    const auto v = numbers(arg);
    if (v.size() != 2) throw psar::InputError("--rho uniform:<lo>,<hi>");
    return psar::RhoUniform{v[0], v[1]};
  }
  if (kind == "values") {
    const auto v = numbers(arg);
    return psar::RhoExplicit{Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
  }
  throw psar::InputError("--rho must be grid, uniform[:lo,hi], constant:<v> or values:<v1,...>");
}

int run_simulate(SimArgs a) {
  if (const char* env = std::getenv("PSAR_SEED")) {
    try {
      std::size_t used = 0;
      a.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw psar::InputError(std::string("PSAR_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  psar::DgpConfig cfg;
  cfg.n = a.n;
  cfg.periods = a.periods;
  cfg.seed = a.seed;
  cfg.rho = parse_rho_spec(a.rho);
  if (a.dgp == "gamma") {
    cfg.innovation = psar::GammaCenteredInnovation{};
  } else {
    cfg.innovation = psar::NormalInnovation{a.sigma2};
  }
  std::vector<psar::EstimatorKind> kinds;
  for (const auto& e : a.estimators) kinds.push_back(e == "ml" ? psar::EstimatorKind::ml : psar::EstimatorKind::robust);
  psar::McOptions options;
  options.q = a.q;
  options.threads = a.threads;
  const psar::McResult result = psar::run_monte_carlo(cfg, kinds, a.reps, options);
  if (!a.records.empty()) psar::write_mc_records_csv(a.records, result.records);
  nlohmann::json summary = psar::mc_summary_json(result);
  summary["schema"] = psar::kReportSchema;
  summary["config"] = {{"n", a.n},         {"periods", a.periods}, {"reps", a.reps},   {"dgp", a.dgp},
                       {"rho", a.rho},     {"sigma2", a.sigma2},   {"seed", a.seed},   {"q", a.q},
                       {"estimators", a.estimators}};
  emit(summary, a.summary);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial autoregressive panels with region-specific coefficients"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "estimate the model and write a JSON report");
  add_data_options(fit, fit_args.data);
  auto* est_opt = fit->add_option("--estimator", fit_args.estimator, "ml or robust")
                      ->check(CLI::IsMember({"ml", "robust"}))
                      ->capture_default_str();
  auto* q_opt = fit->add_option("--q", fit_args.q, "highest spatial lag power of X used as instruments")
                    ->check(CLI::Range(2, 10))
                    ->capture_default_str();
  auto* tol_opt = fit->add_option("--tol", fit_args.tol, "step tolerance of Fisher scoring")
                      ->check(CLI::PositiveNumber)
                      ->capture_default_str();
  auto* iter_opt = fit->add_option("--max-iter", fit_args.max_iter, "iteration cap of Fisher scoring")
                       ->check(CLI::Range(1, 100000))
                       ->capture_default_str();
  auto* init_opt = fit->add_option("--init", fit_args.init, "starting value: zeros or robust")
                       ->check(CLI::IsMember({"zeros", "robust"}))
                       ->capture_default_str();
  auto* info_opt = fit->add_option("--information", fit_args.information, "expected or observed")
                       ->check(CLI::IsMember({"expected", "observed"}))
                       ->capture_default_str();
  fit->add_flag("--impacts", fit_args.impacts, "report direct, indirect and total impacts");
  fit->add_flag("--test-homogeneity", fit_args.homogeneity, "test equality of the spatial coefficients");
  fit->add_option("--out", fit_args.out, "report path (default stdout)");
  fit->add_option("--params-csv", fit_args.params_csv, "per-parameter CSV");
  fit->add_option("--rho-csv", fit_args.rho_csv, "per-region coefficient CSV");

  FitArgs test_args;
  auto* test = app.add_subcommand("test", "homogeneity test of the spatial coefficients");
  add_data_options(test, test_args.data);
  auto* test_est = test->add_option("--estimator", test_args.estimator, "ml or robust")
                       ->check(CLI::IsMember({"ml", "robust"}))
                       ->capture_default_str();
  test->add_option("--q", test_args.q, "instrument order for the robust estimator")->check(CLI::Range(2, 10));
  test->add_option("--out", test_args.out, "output path (default stdout)");

  ImpactArgs impact_args;
  auto* imp = app.add_subcommand("impacts", "impacts from an existing fit report");
  imp->add_option("--report", impact_args.report, "fit report JSON")->required()->check(CLI::ExistingFile);
  imp->add_option("--weights", impact_args.weights, "weights used for the fit")->required()->check(CLI::ExistingFile);
  imp->add_option("--out", impact_args.out, "output path (default stdout)");

  SimArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo experiment on a rook lattice");
  sim->add_option("--n", sim_args.n, "regions")->check(CLI::Range(2LL, 100000LL))->capture_default_str();
  sim->add_option("--periods", sim_args.periods, "periods T")->check(CLI::Range(1LL, 1000000LL))->capture_default_str();
  sim->add_option("--reps", sim_args.reps, "replications")->check(CLI::Range(1, 1000000))->capture_default_str();
  sim->add_option("--dgp", sim_args.dgp, "normal or gamma innovations")
      ->check(CLI::IsMember({"normal", "gamma"}))
      ->capture_default_str();
  auto* sigma_opt = sim->add_option("--sigma2", sim_args.sigma2, "variance of normal innovations")
                        ->check(CLI::NonNegativeNumber)
                        ->capture_default_str();
  sim->add_option("--rho", sim_args.rho, "grid | uniform[:lo,hi] | constant:<v> | values:<v1,...>")->capture_default_str();
  sim->add_option("--estimators", sim_args.estimators, "ml and/or robust")
      ->delimiter(',')
      ->check(CLI::IsMember({"ml", "robust"}));
  sim->add_option("--seed", sim_args.seed, "base seed (PSAR_SEED overrides)")->capture_default_str();
  sim->add_option("--q", sim_args.q, "instrument order")->check(CLI::Range(2, 10))->capture_default_str();
  sim->add_option("--threads", sim_args.threads, "worker threads (0: all cores)");
  sim->add_option("--records", sim_args.records, "long-format per-replication CSV");
  sim->add_option("--summary", sim_args.summary, "summary JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  auto usage = [](const std::string& msg) {
    std::cerr << "psar: usage error: " << msg << '\n';
    return kExitInput;
  };

  try {
    if (fit->parsed()) {
      const bool robust = fit_args.estimator == "robust";
      if (robust && (tol_opt->count() || iter_opt->count() || init_opt->count() || info_opt->count()))
        return usage("--tol, --max-iter, --init and --information apply to --estimator ml only");
      if (!robust && q_opt->count() && fit_args.init != "robust")
        return usage("--q with --estimator ml requires --init robust");
      (void)est_opt;
      return run_fit(fit_args, false);
    }
    if (test->parsed()) {
      (void)test_est;
      return run_fit(test_args, true);
    }
    if (imp->parsed()) return run_impacts(impact_args);
    if (sim->parsed()) {
      if (sim_args.dgp == "gamma" && sigma_opt->count()) return usage("--sigma2 applies to --dgp normal only");
      return run_simulate(sim_args);
    }
  } catch (const psar::InputError& e) {
    std::cerr << "psar: input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const psar::NumericalError& e) {
    std::cerr << "psar: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "psar: input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "psar: error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
