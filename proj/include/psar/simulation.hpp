#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "psar/ml_estimator.hpp"
#include "psar/panel.hpp"
#include "psar/spatial_ops.hpp"
#include "psar/weights.hpp"

namespace psar {

/// SplitMix64 (Steele, Lea & Flood): the state is a counter advanced by the
/// golden-ratio increment, each output a bijective mix of the counter.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Seed of stream `stream` under `seed`: mix(seed ^ mix(stream + golden)).
/// Replication r of a Monte Carlo run uses child_seed(seed, r + 1).
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t stream);

struct RhoExplicit {
  RhoVector values;
};
struct RhoUniform {
  double lo = -1.0;
  double hi = 1.0;
};
struct RhoConstant {
  double value = 0.0;
};
/// -0.9, -0.8, ..., 0.9 assigned to regions in turn.
struct RhoGrid {};
using RhoSpec = std::variant<RhoExplicit, RhoUniform, RhoConstant, RhoGrid>;

struct NormalInnovation {
  double sigma2 = 1.0;
};
/// u ~ Gamma(shape v, rate 2v) with v ~ U(0.5, 1.5); eps = u - 1/2.
struct GammaCenteredInnovation {};
using InnovationSpec = std::variant<NormalInnovation, GammaCenteredInnovation>;

struct DgpConfig {
  Eigen::Index n = 25;
  Eigen::Index periods = 10;
  Eigen::VectorXd beta = (Eigen::VectorXd(3) << 1.0, -1.0, 0.5).finished();
  RhoSpec rho = RhoGrid{};
  InnovationSpec innovation = NormalInnovation{};
  Contiguity contiguity = Contiguity::rook;
  std::uint64_t seed = 20240601;

  void validate() const;
};

struct GeneratedPanel {
  PanelDataset data;
  WeightsMatrix w;
  RhoVector rho;
  Eigen::VectorXd beta;
  Eigen::VectorXd eps;
  Eigen::VectorXd shape;  // gamma shapes v_it, empty for normal innovations
};

/// rows <= cols with rows the largest divisor of n not above sqrt(n).
std::pair<int, int> grid_shape(Eigen::Index n);

/// Rook (or queen) lattice weights for n regions arranged by grid_shape.
WeightsMatrix grid_weights(Eigen::Index n, Contiguity contiguity = Contiguity::rook);

/// The concrete coefficient vector of a config; uniform draws use child_seed(seed, 0).
RhoVector resolve_rho(const DgpConfig& cfg);

/// X = [1, x1, x2] with x1 ~ N(0,1), x2 ~ N(2,1); Y = A^{-1}(X beta + eps).
GeneratedPanel generate_homoskedastic(const DgpConfig& cfg);
GeneratedPanel generate_heteroskedastic(const DgpConfig& cfg);
/// Dispatches on cfg.innovation.
GeneratedPanel generate(const DgpConfig& cfg);

enum class EstimatorKind { ml, robust };
std::string to_string(EstimatorKind kind);

struct McRecord {
  int rep = 0;
  EstimatorKind estimator = EstimatorKind::ml;
  std::string parameter;  // "beta[k]" or "rho[i]"
  double truth = 0.0;
  double estimate = 0.0;
};

struct McFailure {
  int rep = 0;
  EstimatorKind estimator = EstimatorKind::ml;
  std::string message;
};

/// Absolute-error and bias summary over successful replications. Parameter is
/// "beta[k]" or "rho" (all regions pooled).
struct McStat {
  EstimatorKind estimator = EstimatorKind::ml;
  std::string parameter;
  double bias = 0.0;
  double mse = 0.0;
  double q05 = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, q95 = 0.0;
  std::size_t count = 0;
};

struct McEstimatorCount {
  EstimatorKind estimator = EstimatorKind::ml;
  int successes = 0;
  int failures = 0;
};

struct McSummary {
  int replications = 0;
  std::vector<McEstimatorCount> counts;
  std::vector<McStat> stats;

  [[nodiscard]] const McStat& find(EstimatorKind estimator, const std::string& parameter) const;
};

struct McOptions {
  ScoringConfig ml;
  int q = 2;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct McResult {
  std::vector<McRecord> records;  // sorted by (rep, estimator, parameter order)
  std::vector<McFailure> failures;
  McSummary summary;
};

/// Replication r regenerates data from child_seed(cfg.seed, r + 1) with the
/// coefficient vector fixed by resolve_rho(cfg); every estimator sees the same
/// data. Failed or non-converged fits are recorded and excluded. Throws
/// NumericalError if every fit of every estimator fails.
McResult run_monte_carlo(const DgpConfig& cfg, const std::vector<EstimatorKind>& estimators, int reps,
                         const McOptions& options = {});

/// Type-7 (linear interpolation) sample quantile.
double sample_quantile(std::vector<double> values, double p);

}  // namespace psar
