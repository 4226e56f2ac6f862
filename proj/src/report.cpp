#include "psar/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "psar/error.hpp"

namespace psar {

using nlohmann::json;

namespace {

json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double get_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw InputError("report: expected a number, found " + j.dump());
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

Eigen::VectorXd get_vec(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_num(j[i]);
  return v;
}

json mat(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
  return a;
}

Eigen::MatrixXd get_mat(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) throw InputError("report: ragged matrix");
    m.row(r) = get_vec(j[static_cast<std::size_t>(r)]).transpose();
  }
  return m;
}

Eigen::VectorXd sqrt_diag(const Eigen::MatrixXd& m) { return m.diagonal().cwiseMax(0.0).cwiseSqrt(); }

std::string to_string(RhoInit init) {
  switch (init) {
    case RhoInit::zeros: return "zeros";
    case RhoInit::robust: return "robust";
    case RhoInit::explicit_value: return "explicit";
  }
  return "zeros";
}

RhoInit rho_init_from(const std::string& s) {
  if (s == "zeros") return RhoInit::zeros;
  if (s == "robust") return RhoInit::robust;
  if (s == "explicit") return RhoInit::explicit_value;
  throw InputError("report: unknown init '" + s + "'");
}

json data_block(const PanelDataset& data, const ReportExtras& extras) {
  json moments = json::array();
  for (const auto& m : extras.moments) moments.push_back({{"name", m.name}, {"mean", num(m.mean)}, {"sd", num(m.sd)}});
  return {{"n", data.n()},
          {"periods", data.periods()},
          {"k", data.k()},
          {"covariates", data.covariate_names()},
          {"regions", data.region_ids()},
          {"covariate_moments", moments}};
}

json wald_block(const std::vector<WaldRow>& rows) {
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({{"parameter", r.parameter},
                 {"estimate", num(r.estimate)},
                 {"std_error", num(r.std_error)},
                 {"z", num(r.z)},
                 {"p_value", num(r.p_value)}});
  return a;
}

void add_extras(json& j, const ReportExtras& extras) {
  j["options"] = extras.options;
  if (extras.impacts) {
    json a = json::array();
    for (const auto& imp : *extras.impacts)
      a.push_back({{"covariate", imp.covariate},
                   {"direct", num(imp.direct)},
                   {"indirect", num(imp.indirect)},
                   {"total", num(imp.total)}});
    j["impacts"] = a;
  }
  if (extras.homogeneity) {
    const auto& h = *extras.homogeneity;
    j["homogeneity"] = {{"t2", num(h.t2)},           {"f_stat", num(h.f_stat)},     {"df1", h.df1},
                        {"df2", num(h.df2)},         {"p_value", num(h.p_value)},   {"rho0_hat", num(h.rho0_hat)},
                        {"var_rho0", num(h.var_rho0)}};
  }
}

void require_schema(const json& j, const std::string& estimator) {
  if (!j.contains("schema") || j["schema"] != kReportSchema) throw InputError("report: unsupported or missing schema");
  if (j.at("estimator") != estimator) throw InputError("report: not a " + estimator + " report");
}

}  // namespace

json report_json(const MlFit& fit, const PanelDataset& data, const ReportExtras& extras) {
  json j;
  j["schema"] = kReportSchema;
  j["estimator"] = "ml";
  j["data"] = data_block(data, extras);
  const auto& c = fit.config;
  j["config"] = {{"epsilon", num(c.epsilon)},
                 {"score_tolerance", num(c.score_tolerance)},
                 {"max_iterations", c.max_iterations},
                 {"init", to_string(c.init)},
                 {"rho_init", vec(c.rho_init)},
                 {"robust_q", c.robust_q},
                 {"step_damping", num(c.step_damping)},
                 {"information", c.information == InformationKind::expected ? "expected" : "observed"},
                 {"fallback_to_observed", c.fallback_to_observed},
                 {"newton_polish_below", num(c.newton_polish_below)}};
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["rho_at_bound"] = fit.at_bound;
  j["estimates"] = {{"beta", vec(fit.beta_hat)}, {"rho", vec(fit.rho_hat)}, {"sigma2", num(fit.sigma2_hat)}};
  j["std_errors"] = {{"beta", vec(sqrt_diag(fit.beta_cov))}, {"rho", vec(sqrt_diag(fit.rho_cov))}};
  j["covariance"] = {{"beta", mat(fit.beta_cov)}, {"rho", mat(fit.rho_cov)}};
  j["information"] = mat(fit.rho_info);
  j["score"] = vec(fit.score);
  j["loglik"] = num(fit.loglik);
  json trace = json::array();
  for (const auto& t : fit.trace) trace.push_back({{"iteration", t.iteration}, {"loglik", num(t.loglik)}, {"rho", vec(t.rho)}});
  j["trace"] = trace;
  j["wald"] = wald_block(wald_table(fit, data));
  add_extras(j, extras);
  return j;
}

json report_json(const RobustFit& fit, const PanelDataset& data, const ReportExtras& extras) {
  json j;
  j["schema"] = kReportSchema;
  j["estimator"] = "robust";
  j["data"] = data_block(data, extras);
  j["q"] = fit.q;
  j["k"] = fit.k;
  j["estimates"] = {{"beta", vec(fit.beta())}, {"rho", vec(fit.rho())}, {"sigma2", num(fit.sigma2_hat)}};
  j["std_errors"] = {{"beta", vec(sqrt_diag(fit.beta_cov()))}, {"rho", vec(sqrt_diag(fit.rho_cov()))}};
  j["covariance"] = {{"delta", mat(fit.cov)}, {"delta_literal", mat(fit.cov_literal)}};
  j["rho_in_range"] = fit.rho_in_range;
  json kept = json::array();
  for (const auto& s : fit.kept_columns)
    kept.push_back({{"power", s.power},
                    {"covariate", s.covariate},
                    {"region", s.region},
                    {"label", s.describe(data.covariate_names(), data.region_ids())}});
  j["kept_columns"] = kept;
  j["diagnostics"] = {{"instrument_gram_condition", num(fit.diagnostics.instrument_gram_condition)},
                      {"normal_matrix_condition", num(fit.diagnostics.normal_matrix_condition)},
                      {"instrument_count", fit.diagnostics.instrument_count}};
  j["wald"] = wald_block(wald_table(fit, data));
  add_extras(j, extras);
  return j;
}

MlFit ml_fit_from_report(const json& j) {
  require_schema(j, "ml");
  MlFit fit;
  const auto& c = j.at("config");
  fit.config.epsilon = get_num(c.at("epsilon"));
  fit.config.score_tolerance = get_num(c.at("score_tolerance"));
  fit.config.max_iterations = c.at("max_iterations").get<int>();
  fit.config.init = rho_init_from(c.at("init").get<std::string>());
  fit.config.rho_init = get_vec(c.at("rho_init"));
  fit.config.robust_q = c.at("robust_q").get<int>();
  fit.config.step_damping = get_num(c.at("step_damping"));
  fit.config.information = c.at("information") == "observed" ? InformationKind::observed : InformationKind::expected;
  fit.config.fallback_to_observed = c.at("fallback_to_observed").get<bool>();
  fit.config.newton_polish_below = get_num(c.at("newton_polish_below"));
  fit.converged = j.at("converged").get<bool>();
  fit.iterations = j.at("iterations").get<int>();
  fit.at_bound = j.at("rho_at_bound").get<std::vector<bool>>();
  fit.beta_hat = get_vec(j.at("estimates").at("beta"));
  fit.rho_hat = get_vec(j.at("estimates").at("rho"));
  fit.sigma2_hat = get_num(j.at("estimates").at("sigma2"));
  fit.beta_cov = get_mat(j.at("covariance").at("beta"));
  fit.rho_cov = get_mat(j.at("covariance").at("rho"));
  fit.rho_info = get_mat(j.at("information"));
  fit.score = get_vec(j.at("score"));
  fit.loglik = get_num(j.at("loglik"));
  for (const auto& t : j.at("trace"))
    fit.trace.push_back({t.at("iteration").get<int>(), get_vec(t.at("rho")), get_num(t.at("loglik"))});
  return fit;
}

RobustFit robust_fit_from_report(const json& j) {
  require_schema(j, "robust");
  RobustFit fit;
  fit.q = j.at("q").get<int>();
  fit.k = j.at("k").get<Eigen::Index>();
  const Eigen::VectorXd beta = get_vec(j.at("estimates").at("beta"));
  const Eigen::VectorXd rho = get_vec(j.at("estimates").at("rho"));
  fit.delta_hat.resize(beta.size() + rho.size());
  fit.delta_hat << beta, rho;
  fit.sigma2_hat = get_num(j.at("estimates").at("sigma2"));
  fit.cov = get_mat(j.at("covariance").at("delta"));
  fit.cov_literal = get_mat(j.at("covariance").at("delta_literal"));
  fit.rho_in_range = j.at("rho_in_range").get<std::vector<bool>>();
  for (const auto& s : j.at("kept_columns"))
    fit.kept_columns.push_back({s.at("power").get<int>(), s.at("covariate").get<Eigen::Index>(), s.at("region").get<Eigen::Index>()});
  const auto& d = j.at("diagnostics");
  fit.diagnostics.instrument_gram_condition = get_num(d.at("instrument_gram_condition"));
  fit.diagnostics.normal_matrix_condition = get_num(d.at("normal_matrix_condition"));
  fit.diagnostics.instrument_count = d.at("instrument_count").get<Eigen::Index>();
  return fit;
}

std::optional<HomogeneityTestReport> homogeneity_from_report(const json& j) {
  if (!j.contains("homogeneity")) return std::nullopt;
  const auto& h = j.at("homogeneity");
  HomogeneityTestReport r;
  r.t2 = get_num(h.at("t2"));
  r.f_stat = get_num(h.at("f_stat"));
  r.df1 = h.at("df1").get<Eigen::Index>();
  r.df2 = get_num(h.at("df2"));
  r.p_value = get_num(h.at("p_value"));
  r.rho0_hat = get_num(h.at("rho0_hat"));
  r.var_rho0 = get_num(h.at("var_rho0"));
  return r;
}

ImpactSummary impacts_from_report(const json& j) {
  ImpactSummary out;
  if (!j.contains("impacts")) return out;
  for (const auto& i : j.at("impacts"))
    out.push_back({i.at("covariate").get<std::string>(), get_num(i.at("direct")), get_num(i.at("indirect")),
                   get_num(i.at("total"))});
  return out;
}

void write_parameter_csv(const std::string& path, const std::vector<WaldRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  out << "parameter,estimate,std_error,z,p_value\n";
  for (const auto& r : rows)
    out << r.parameter << ',' << format_double(r.estimate) << ',' << format_double(r.std_error) << ','
        << format_double(r.z) << ',' << format_double(r.p_value) << '\n';
}

void write_rho_table_csv(const std::string& path, const std::vector<WaldRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  out << "region,rho,std_error,p_value\n";
  for (const auto& r : rows) {
    if (r.parameter.rfind("rho[", 0) != 0 || r.parameter.back() != ']') continue;
    out << r.parameter.substr(4, r.parameter.size() - 5) << ',' << format_double(r.estimate) << ','
        << format_double(r.std_error) << ',' << format_double(r.p_value) << '\n';
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": invalid JSON: " + e.what());
  }
}

}  // namespace psar
