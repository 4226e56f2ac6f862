#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "psar/error.hpp"
#include "psar/weights.hpp"
#include "support.hpp"

using psar::Contiguity;
using psar::InputError;
using psar::WeightsMatrix;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("psar_weights_" + name);
  std::ofstream(path) << text;
  return path.string();
}

}  // namespace

TEST(RookGrid, OneByTwoIsASwap) {
  const WeightsMatrix w = psar::build_rook_grid_weights(1, 2);
  Eigen::Matrix2d want;
  want << 0, 1, 1, 0;
  EXPECT_EQ(w.matrix(), Eigen::MatrixXd(want));
}

TEST(RookGrid, TwoByTwoCornersHaveTwoNeighbors) {
  const WeightsMatrix w = psar::build_rook_grid_weights(2, 2);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_EQ((w.matrix().row(i).array() == 0.5).count(), 2);
    EXPECT_EQ((w.matrix().row(i).array() == 0.0).count(), 2);
  }
}

TEST(RookGrid, ThreeByThreeCenterAndCorners) {
  const WeightsMatrix w = psar::build_rook_grid_weights(3, 3);
  EXPECT_EQ((w.matrix().row(4).array() == 0.25).count(), 4);
  for (Eigen::Index corner : {0, 2, 6, 8}) EXPECT_EQ((w.matrix().row(corner).array() == 0.5).count(), 2);
  EXPECT_DOUBLE_EQ(w(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(w(0, 3), 0.5);
  EXPECT_DOUBLE_EQ(w(0, 4), 0.0);
}

TEST(RookGrid, QueenAddsDiagonals) {
  const WeightsMatrix w = psar::build_rook_grid_weights(3, 3, Contiguity::queen);
  EXPECT_EQ((w.matrix().row(4).array() == 0.125).count(), 8);
  EXPECT_NEAR(w(0, 4), 1.0 / 3.0, 1e-15);
}

TEST(RookGrid, SingleCellRejected) {
  try {
    psar::build_rook_grid_weights(1, 1);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("no neighbors possible"), std::string::npos);
  }
}

TEST(RowStandardize, DividesByRowSums) {
  Eigen::Matrix2d raw;
  raw << 0, 2, 3, 0;
  EXPECT_EQ(psar::row_standardize(raw).matrix(), Eigen::MatrixXd(Eigen::Matrix2d{{0, 1}, {1, 0}}));

  Eigen::Matrix3d raw3;
  raw3 << 0, 1, 1, 1, 0, 0, 2, 2, 0;
  Eigen::Matrix3d want;
  want << 0, .5, .5, 1, 0, 0, .5, .5, 0;
  EXPECT_EQ(psar::row_standardize(raw3).matrix(), Eigen::MatrixXd(want));
}

TEST(RowStandardize, RejectsNonzeroDiagonalNegativeAndIsolated) {
  EXPECT_THROW(psar::row_standardize(Eigen::Matrix2d{{1, 1}, {1, 1}}), InputError);
  EXPECT_THROW(psar::row_standardize(Eigen::Matrix2d{{0, -1}, {1, 0}}), InputError);
  try {
    psar::row_standardize(Eigen::Matrix3d{{0, 1, 0}, {0, 0, 0}, {1, 1, 0}}, {"a", "b", "c"});
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
}

TEST(WeightsMatrix, ValidatesRowSums) {
  EXPECT_THROW(WeightsMatrix(Eigen::Matrix2d{{0, 0.5}, {1, 0}}), InputError);
  EXPECT_NO_THROW(WeightsMatrix(Eigen::Matrix2d{{0, 1}, {1, 0}}));
  EXPECT_THROW(WeightsMatrix(Eigen::MatrixXd::Zero(1, 1)), InputError);
}

TEST(WeightsMatrix, PermutedMatchesExplicitPermutation) {
  std::mt19937_64 rng(3);
  const WeightsMatrix w = psar::testing::random_weights(5, rng);
  const std::vector<Eigen::Index> perm{3, 0, 4, 1, 2};
  const WeightsMatrix p = w.permuted(perm);
  for (Eigen::Index a = 0; a < 5; ++a) {
    for (Eigen::Index b = 0; b < 5; ++b) EXPECT_EQ(p(a, b), w(perm[a], perm[b]));
    EXPECT_EQ(p.region_ids()[a], w.region_ids()[perm[a]]);
  }
}

TEST(WeightsIo, DenseCsvWithHeader) {
  const auto path = write_temp("dense.csv", "a,b,c\n0,1,1\n1,0,0\n2,2,0\n");
  const WeightsMatrix w = psar::read_weights(path);
  EXPECT_EQ(w.region_ids(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_DOUBLE_EQ(w(2, 0), 0.5);
  EXPECT_DOUBLE_EQ(w(1, 0), 1.0);
}

TEST(WeightsIo, DenseCsvWithoutHeader) {
  const auto path = write_temp("plain.csv", "0,3\n5,0\n");
  const WeightsMatrix w = psar::read_weights(path);
  EXPECT_EQ(w.region_ids(), (std::vector<std::string>{"0", "1"}));
  EXPECT_DOUBLE_EQ(w(0, 1), 1.0);
}

TEST(WeightsIo, DenseCsvNumericHeader) {
  const WeightsMatrix w = psar::read_weights(write_temp("numhead.csv", "10,20\n0,1\n1,0\n"));
  EXPECT_EQ(w.region_ids(), (std::vector<std::string>{"10", "20"}));
}

TEST(WeightsIo, DenseCsvRejectsBadCell) {
  const auto path = write_temp("bad.csv", "0,1\nx,0\n");
  EXPECT_THROW(psar::read_weights(path), InputError);
}

TEST(WeightsIo, AdjacencyList) {
  const auto path = write_temp("adj.txt", "# ring\nA: B, C\nB: A\n\nC: A,B\n");
  const WeightsMatrix w = psar::read_weights(path);
  EXPECT_EQ(w.region_ids(), (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_DOUBLE_EQ(w(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(w(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(w(2, 1), 0.5);
}

TEST(WeightsIo, AdjacencyErrors) {
  EXPECT_THROW(psar::read_weights(write_temp("unknown.txt", "A: Z\nB: A\n")), InputError);
  EXPECT_THROW(psar::read_weights(write_temp("self.txt", "A: A\nB: A\n")), InputError);
  EXPECT_THROW(psar::read_weights(write_temp("isolated.txt", "A: B\nB: A\nC:\n")), InputError);
  EXPECT_THROW(psar::read_weights("/nonexistent/weights.txt"), InputError);
}

TEST(WeightsIo, BundledStatesAdjacencyIsConsistent) {
  const WeightsMatrix w = psar::read_weights(PSAR_DATA_DIR "/us_states_adjacency.txt");
  EXPECT_EQ(w.n(), 48);
  // Contiguity is symmetric: the binary pattern must be.
  for (Eigen::Index i = 0; i < w.n(); ++i) {
    for (Eigen::Index j = 0; j < w.n(); ++j) EXPECT_EQ(w(i, j) > 0.0, w(j, i) > 0.0) << w.region_ids()[i] << " " << w.region_ids()[j];
  }
}
