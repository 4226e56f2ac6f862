#include "psar/weights.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "csv_util.hpp"
#include "psar/error.hpp"

namespace psar {

namespace {

std::vector<std::string> default_ids(Eigen::Index n) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

std::string region_label(const std::vector<std::string>& ids, Eigen::Index i) {
  if (static_cast<std::size_t>(i) < ids.size()) return "'" + ids[static_cast<std::size_t>(i)] + "'";
  return "#" + std::to_string(i);
}

void check_shape_and_ids(const Eigen::MatrixXd& w, const std::vector<std::string>& ids) {
  if (w.rows() != w.cols()) throw InputError("weights matrix must be square");
  if (w.rows() < 2) throw InputError("weights matrix needs at least two regions: no neighbors possible");
  if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != w.rows())
    throw InputError("number of region ids does not match weights dimension");
  if (!ids.empty()) {
    std::set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) throw InputError("duplicate region id in weights");
  }
}

void check_entries(const Eigen::MatrixXd& w, const std::vector<std::string>& ids) {
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (w(i, i) != 0.0)
      throw InputError("weights diagonal must be zero (region " + region_label(ids, i) + ")");
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (!std::isfinite(w(i, j))) throw InputError("non-finite weight in row " + region_label(ids, i));
      if (w(i, j) < 0.0) throw InputError("negative weight in row " + region_label(ids, i));
    }
    if (!(w.row(i).maxCoeff() > 0.0))
      throw InputError("isolated region " + region_label(ids, i) + " has no neighbors");
  }
}

}  // namespace

WeightsMatrix::WeightsMatrix(Eigen::MatrixXd w, std::vector<std::string> region_ids)
    : w_(std::move(w)), ids_(std::move(region_ids)) {
  check_shape_and_ids(w_, ids_);
  check_entries(w_, ids_);
  for (Eigen::Index i = 0; i < w_.rows(); ++i) {
    if (std::abs(w_.row(i).sum() - 1.0) > 1e-12)
      throw InputError("weights row " + region_label(ids_, i) + " does not sum to one");
  }
  if (ids_.empty()) ids_ = default_ids(w_.rows());
}

WeightsMatrix WeightsMatrix::permuted(const std::vector<Eigen::Index>& perm) const {
  const Eigen::Index n = this->n();
  if (static_cast<Eigen::Index>(perm.size()) != n) throw InputError("permutation size mismatch");
  Eigen::MatrixXd out(n, n);
  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (Eigen::Index a = 0; a < n; ++a) {
    ids[static_cast<std::size_t>(a)] = ids_[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    for (Eigen::Index b = 0; b < n; ++b)
      out(a, b) = w_(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
  }
  return WeightsMatrix(std::move(out), std::move(ids));
}

WeightsMatrix row_standardize(const Eigen::MatrixXd& raw, std::vector<std::string> region_ids) {
  check_shape_and_ids(raw, region_ids);
  check_entries(raw, region_ids);
  Eigen::MatrixXd w = raw;
  for (Eigen::Index i = 0; i < w.rows(); ++i) w.row(i) /= w.row(i).sum();
  return WeightsMatrix(std::move(w), std::move(region_ids));
}

WeightsMatrix build_rook_grid_weights(int rows, int cols, Contiguity contiguity) {
  if (rows < 1 || cols < 1) throw InputError("grid dimensions must be positive");
  if (rows * cols < 2) throw InputError("1x1 grid: no neighbors possible");
  const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Eigen::Index i = static_cast<Eigen::Index>(r) * cols + c;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (contiguity == Contiguity::rook && dr != 0 && dc != 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          raw(i, static_cast<Eigen::Index>(rr) * cols + cc) = 1.0;
        }
      }
    }
  }
  return row_standardize(raw);
}

WeightsMatrix read_weights_dense_csv(const std::string& path) {
  auto lines = detail::read_lines(path);
  if (lines.empty()) throw InputError("empty weights file: " + path);
  std::vector<std::string> ids;
  auto first = detail::split(lines.front(), ',');
  const bool numeric = std::all_of(first.begin(), first.end(), [](const std::string& s) { return detail::parse_double(s).has_value(); });
  // Numeric ids such as 0,1,2 still form a header when they add a row to a square matrix.
  if (!numeric || lines.size() == first.size() + 1) {
    ids = first;
    lines.erase(lines.begin());
  }
  const auto n = static_cast<Eigen::Index>(lines.size());
  Eigen::MatrixXd raw(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto cells = detail::split(lines[static_cast<std::size_t>(i)], ',');
    if (static_cast<Eigen::Index>(cells.size()) != n)
      throw InputError(path + ": row " + std::to_string(i + 1) + " has " + std::to_string(cells.size()) +
                       " values, expected " + std::to_string(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto v = detail::parse_double(cells[static_cast<std::size_t>(j)]);
      if (!v)
        throw InputError(path + ": non-numeric weight at row " + std::to_string(i + 1) + ", column " +
                         std::to_string(j + 1));
      raw(i, j) = *v;
    }
  }
  return row_standardize(raw, std::move(ids));
}

WeightsMatrix read_weights_adjacency(const std::string& path) {
  const auto lines = detail::read_lines(path);
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> neighbours;
  std::map<std::string, Eigen::Index> index;
  for (const auto& line : lines) {
    const auto body = detail::trim(line);
    if (body.front() == '#') continue;
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) throw InputError(path + ": missing ':' in line '" + line + "'");
    std::string id(detail::trim(body.substr(0, colon)));
    if (id.empty()) throw InputError(path + ": empty region id in line '" + line + "'");
    if (index.count(id)) throw InputError(path + ": region '" + id + "' listed twice");
    index[id] = static_cast<Eigen::Index>(ids.size());
    ids.push_back(id);
    std::vector<std::string> nb;
    const auto rest = detail::trim(body.substr(colon + 1));
    if (!rest.empty()) {
      for (auto& s : detail::split(rest, ',')) {
        if (!s.empty()) nb.push_back(s);
      }
    }
    neighbours.push_back(std::move(nb));
  }
  const auto n = static_cast<Eigen::Index>(ids.size());
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& nb : neighbours[static_cast<std::size_t>(i)]) {
      const auto it = index.find(nb);
      if (it == index.end())
        throw InputError(path + ": region '" + ids[static_cast<std::size_t>(i)] + "' lists unknown neighbor '" + nb + "'");
      if (it->second == i) throw InputError(path + ": region '" + nb + "' lists itself as neighbor");
      raw(i, it->second) = 1.0;
    }
  }
  return row_standardize(raw, std::move(ids));
}

WeightsMatrix read_weights(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv" || ext == ".CSV") return read_weights_dense_csv(path);
  return read_weights_adjacency(path);
}

}  // namespace psar
