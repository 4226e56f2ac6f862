#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psar/inference.hpp"
#include "psar/io.hpp"
#include "psar/ml_estimator.hpp"
#include "psar/robust_estimator.hpp"

namespace psar {

inline constexpr const char* kReportSchema = "psar-report/1";

struct ReportExtras {
  std::optional<ImpactSummary> impacts;
  std::optional<HomogeneityTestReport> homogeneity;
  std::vector<ColumnMoments> moments;
  nlohmann::json options = nlohmann::json::object();  // echo of the command line
};

/// Fit reports. Non-finite numbers are written as the strings "inf", "-inf" or
/// "nan"; everything else as JSON numbers with round-trip precision.
nlohmann::json report_json(const MlFit& fit, const PanelDataset& data, const ReportExtras& extras = {});
nlohmann::json report_json(const RobustFit& fit, const PanelDataset& data, const ReportExtras& extras = {});

/// Inverse of report_json for the numeric content of a fit.
MlFit ml_fit_from_report(const nlohmann::json& report);
RobustFit robust_fit_from_report(const nlohmann::json& report);
std::optional<HomogeneityTestReport> homogeneity_from_report(const nlohmann::json& report);
ImpactSummary impacts_from_report(const nlohmann::json& report);

/// parameter,estimate,std_error,z,p_value
void write_parameter_csv(const std::string& path, const std::vector<WaldRow>& rows);
/// region,rho,std_error,p_value for the "rho[...]" rows of a Wald table.
void write_rho_table_csv(const std::string& path, const std::vector<WaldRow>& rows);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace psar
