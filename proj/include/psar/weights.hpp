#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace psar {

enum class Contiguity { rook, queen };

/// Row-standardized spatial weight matrix.
///
/// Invariants (checked on construction): square, nonnegative, zero diagonal,
/// every row has a positive entry and sums to one within 1e-12. Instances are
/// immutable once built.
class WeightsMatrix {
 public:
  /// Wraps an already standardized matrix. Throws InputError when any invariant fails.
  explicit WeightsMatrix(Eigen::MatrixXd w, std::vector<std::string> region_ids = {});

  [[nodiscard]] Eigen::Index n() const { return w_.rows(); }
  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return w_; }
  [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return w_(i, j); }

  /// Region labels in row order. Defaults to "0", "1", ... when none were given.
  [[nodiscard]] const std::vector<std::string>& region_ids() const { return ids_; }

  /// Same weights with rows and columns reordered so that region perm[k] becomes region k.
  [[nodiscard]] WeightsMatrix permuted(const std::vector<Eigen::Index>& perm) const;

 private:
  Eigen::MatrixXd w_;
  std::vector<std::string> ids_;
};

/// Divides each row of a nonnegative, zero-diagonal matrix by its sum.
WeightsMatrix row_standardize(const Eigen::MatrixXd& raw, std::vector<std::string> region_ids = {});

/// First-order contiguity on a rows x cols lattice, cells numbered row-major.
/// Rook neighbours share an edge; queen adds the four diagonal cells.
WeightsMatrix build_rook_grid_weights(int rows, int cols, Contiguity contiguity = Contiguity::rook);

/// Dense CSV, n rows of n values. An optional first row of labels supplies the
/// region ids; it is recognized when non-numeric or when it is row n + 1.
WeightsMatrix read_weights_dense_csv(const std::string& path);

/// One region per line: `region_id: neighbor_id[,neighbor_id...]`. Blank lines
/// and lines starting with '#' are skipped. Binary weights, then standardized.
WeightsMatrix read_weights_adjacency(const std::string& path);

/// Picks the reader from the extension: `.csv` is dense, anything else adjacency.
WeightsMatrix read_weights(const std::string& path);

}  // namespace psar
