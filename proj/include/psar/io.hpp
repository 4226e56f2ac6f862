#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "psar/panel.hpp"
#include "psar/simulation.hpp"
#include "psar/weights.hpp"

namespace psar {

struct PanelCsvOptions {
  bool intercept = false;  // prepend a ones column named "const"
};

/// Panel CSV: header row with `region`, `time`, `y` (any positions) and every
/// other column a numeric covariate in file order. Rows may come in any order;
/// the result is stacked time-major with periods and regions sorted (numeric
/// labels compare as numbers). Missing (region, time) pairs, duplicates and
/// non-numeric cells are InputErrors.
PanelDataset load_panel(const std::string& path, const PanelCsvOptions& options = {});
PanelDataset parse_panel_csv(std::istream& in, const PanelCsvOptions& options = {},
                             const std::string& source = "<stream>");

/// Canonical form: header `region,time,y,<covariates>`, time-major rows, values
/// in shortest round-trip notation. Reading it back reproduces the panel.
void write_panel_csv(std::ostream& out, const PanelDataset& data);
void write_panel_csv(const std::string& path, const PanelDataset& data);

/// Reorders the panel's regions to follow the weights' region ids. The two id
/// sets must be identical.
PanelDataset align_to_weights(const PanelDataset& data, const WeightsMatrix& w);

struct ColumnMoments {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (divisor nT - 1)
};
std::vector<ColumnMoments> covariate_moments(const PanelDataset& data);

/// Long-format Monte Carlo records: rep,estimator,parameter,truth,estimate.
void write_mc_records_csv(std::ostream& out, const std::vector<McRecord>& records);
void write_mc_records_csv(const std::string& path, const std::vector<McRecord>& records);
nlohmann::json mc_summary_json(const McResult& result);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

}  // namespace psar
