#include "psar/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "csv_util.hpp"
#include "psar/error.hpp"

namespace psar {

namespace {

bool label_less(const std::string& a, const std::string& b) {
  const auto da = detail::parse_double(a);
  const auto db = detail::parse_double(b);
  if (da && db) {
    if (*da != *db) return *da < *db;
    return a < b;
  }
  if (da != db) return da.has_value();  // numbers before words
  return a < b;
}

std::vector<std::string> sorted_unique(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end(), label_less);
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write file: " + path);
  return out;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw NumericalError("cannot format number");
  return {buf.data(), ptr};
}

PanelDataset parse_panel_csv(std::istream& in, const PanelCsvOptions& options, const std::string& source) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (lines.empty() && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    lines.push_back(line);
  }
  std::size_t header_line = 0;
  while (header_line < lines.size() && detail::trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) throw InputError(source + ": empty panel file");

  const std::vector<std::string> header = detail::split(lines[header_line], ',');
  std::ptrdiff_t col_region = -1, col_time = -1, col_y = -1;
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h.empty()) throw InputError(source + ": empty column name in header (column " + std::to_string(c + 1) + ")");
    if (std::count(header.begin(), header.end(), h) > 1) throw InputError(source + ": duplicate column '" + h + "'");
    if (h == "region") {
      col_region = static_cast<std::ptrdiff_t>(c);
    } else if (h == "time") {
      col_time = static_cast<std::ptrdiff_t>(c);
    } else if (h == "y") {
      col_y = static_cast<std::ptrdiff_t>(c);
    } else {
      cov_cols.push_back(c);
      cov_names.push_back(h);
    }
  }
  if (col_region < 0 || col_time < 0 || col_y < 0)
    throw InputError(source + ": header must contain columns region, time and y");
  if (cov_cols.empty() && !options.intercept) throw InputError(source + ": no covariate columns (use --intercept for a constant-only model)");

  struct Row {
    std::string region;
    std::string time;
    double y;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  for (std::size_t l = header_line + 1; l < lines.size(); ++l) {
    if (detail::trim(lines[l]).empty()) continue;
    const auto cells = detail::split(lines[l], ',');
    const std::string where = source + ": line " + std::to_string(l + 1);
    if (cells.size() != header.size())
      throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    auto number = [&](std::size_t c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v || !std::isfinite(*v))
        throw InputError(where + ", column '" + header[c] + "': non-numeric value '" + cells[c] + "'");
      return *v;
    };
    Row r{cells[static_cast<std::size_t>(col_region)], cells[static_cast<std::size_t>(col_time)],
          number(static_cast<std::size_t>(col_y)), {}};
    if (r.region.empty() || r.time.empty()) throw InputError(where + ": empty region or time label");
    for (const std::size_t c : cov_cols) r.x.push_back(number(c));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw InputError(source + ": no data rows");

  std::vector<std::string> regions, times;
  for (const auto& r : rows) {
    regions.push_back(r.region);
    times.push_back(r.time);
  }
  regions = sorted_unique(std::move(regions));
  times = sorted_unique(std::move(times));
  std::map<std::string, std::size_t> region_pos, time_pos;
  for (std::size_t i = 0; i < regions.size(); ++i) region_pos[regions[i]] = i;
  for (std::size_t t = 0; t < times.size(); ++t) time_pos[times[t]] = t;

  const auto n = static_cast<Eigen::Index>(regions.size());
  const auto periods = static_cast<Eigen::Index>(times.size());
  const Eigen::Index k_file = static_cast<Eigen::Index>(cov_cols.size());
  const Eigen::Index offset = options.intercept ? 1 : 0;
  std::vector<std::ptrdiff_t> slot(static_cast<std::size_t>(n * periods), -1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto idx = time_pos[rows[r].time] * static_cast<std::size_t>(n) + region_pos[rows[r].region];
    if (slot[idx] >= 0)
      throw InputError(source + ": duplicate observation for region '" + rows[r].region + "', time '" + rows[r].time + "'");
    slot[idx] = static_cast<std::ptrdiff_t>(r);
  }
  std::vector<std::string> missing;
  for (Eigen::Index t = 0; t < periods; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (slot[static_cast<std::size_t>(t * n + i)] < 0)
        missing.push_back("(" + regions[static_cast<std::size_t>(i)] + ", " + times[static_cast<std::size_t>(t)] + ")");
    }
  }
  if (!missing.empty()) {
    std::string msg = source + ": unbalanced panel, " + std::to_string(missing.size()) + " missing (region, time) pairs:";
    for (std::size_t m = 0; m < missing.size() && m < 20; ++m) msg += " " + missing[m];
    if (missing.size() > 20) msg += " ...";
    throw InputError(msg);
  }

  Eigen::VectorXd y(n * periods);
  Eigen::MatrixXd x(n * periods, k_file + offset);
  if (options.intercept) x.col(0).setOnes();
  for (Eigen::Index r = 0; r < n * periods; ++r) {
    const Row& row = rows[static_cast<std::size_t>(slot[static_cast<std::size_t>(r)])];
    y(r) = row.y;
    for (Eigen::Index c = 0; c < k_file; ++c) x(r, c + offset) = row.x[static_cast<std::size_t>(c)];
  }
  if (options.intercept) {
    if (std::find(cov_names.begin(), cov_names.end(), "const") != cov_names.end())
      throw InputError(source + ": --intercept conflicts with an existing 'const' column");
    cov_names.insert(cov_names.begin(), "const");
  }
  return PanelDataset(n, periods, std::move(y), std::move(x), std::move(regions), std::move(times), std::move(cov_names));
}

PanelDataset load_panel(const std::string& path, const PanelCsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  return parse_panel_csv(in, options, path);
}

void write_panel_csv(std::ostream& out, const PanelDataset& data) {
  out << "region,time,y";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  const Eigen::Index n = data.n();
  for (Eigen::Index t = 0; t < data.periods(); ++t) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = t * n + i;
      out << data.region_ids()[static_cast<std::size_t>(i)] << ',' << data.time_ids()[static_cast<std::size_t>(t)] << ','
          << format_double(data.y()(r));
      for (Eigen::Index c = 0; c < data.k(); ++c) out << ',' << format_double(data.x()(r, c));
      out << '\n';
    }
  }
}

void write_panel_csv(const std::string& path, const PanelDataset& data) {
  auto out = open_out(path);
  write_panel_csv(out, data);
}

PanelDataset align_to_weights(const PanelDataset& data, const WeightsMatrix& w) {
  const auto& want = w.region_ids();
  const auto& have = data.region_ids();
  std::map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < have.size(); ++i) pos[have[i]] = static_cast<Eigen::Index>(i);
  std::vector<std::string> only_weights, only_panel;
  std::vector<Eigen::Index> perm;
  for (const auto& id : want) {
    const auto it = pos.find(id);
    if (it == pos.end()) {
      only_weights.push_back(id);
    } else {
      perm.push_back(it->second);
    }
  }
  std::map<std::string, int> in_weights;
  for (const auto& id : want) in_weights[id] = 1;
  for (const auto& id : have) {
    if (!in_weights.count(id)) only_panel.push_back(id);
  }
  if (!only_weights.empty() || !only_panel.empty()) {
    std::string msg = "region sets of panel and weights differ;";
    if (!only_panel.empty()) {
      msg += " only in panel:";
      for (const auto& id : only_panel) msg += " " + id;
      msg += ";";
    }
    if (!only_weights.empty()) {
      msg += " only in weights:";
      for (const auto& id : only_weights) msg += " " + id;
    }
    throw InputError(msg);
  }
  return data.permuted_regions(perm);
}

std::vector<ColumnMoments> covariate_moments(const PanelDataset& data) {
  std::vector<ColumnMoments> out;
  const double rows = static_cast<double>(data.rows());
  for (Eigen::Index c = 0; c < data.k(); ++c) {
    const auto col = data.x().col(c);
    const double mean = col.mean();
    const double ss = (col.array() - mean).square().sum();
    const std::string name = static_cast<std::size_t>(c) < data.covariate_names().size()
                                 ? data.covariate_names()[static_cast<std::size_t>(c)]
                                 : "x" + std::to_string(c);
    out.push_back({name, mean, rows > 1 ? std::sqrt(ss / (rows - 1.0)) : 0.0});
  }
  return out;
}

void write_mc_records_csv(std::ostream& out, const std::vector<McRecord>& records) {
  out << "rep,estimator,parameter,truth,estimate\n";
  for (const auto& r : records) {
    out << r.rep << ',' << to_string(r.estimator) << ',' << r.parameter << ',' << format_double(r.truth) << ','
        << format_double(r.estimate) << '\n';
  }
}

void write_mc_records_csv(const std::string& path, const std::vector<McRecord>& records) {
  auto out = open_out(path);
  write_mc_records_csv(out, records);
}

nlohmann::json mc_summary_json(const McResult& result) {
  nlohmann::json j;
  j["replications"] = result.summary.replications;
  for (const auto& c : result.summary.counts)
    j["counts"].push_back({{"estimator", to_string(c.estimator)}, {"successes", c.successes}, {"failures", c.failures}});
  for (const auto& s : result.summary.stats) {
    j["stats"].push_back({{"estimator", to_string(s.estimator)},
                          {"parameter", s.parameter},
                          {"count", s.count},
                          {"bias", s.bias},
                          {"mse", s.mse},
                          {"abs_error_quantiles",
                           {{"q05", s.q05}, {"q25", s.q25}, {"median", s.median}, {"q75", s.q75}, {"q95", s.q95}}}});
  }
  for (const auto& f : result.failures)
    j["failures"].push_back({{"rep", f.rep}, {"estimator", to_string(f.estimator)}, {"message", f.message}});
  if (!j.contains("failures")) j["failures"] = nlohmann::json::array();
  return j;
}

}  // namespace psar
