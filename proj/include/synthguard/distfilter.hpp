#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "synthguard/cart.hpp"
#include "synthguard/dataset.hpp"
#include "synthguard/errors.hpp"

namespace synthguard {

enum class DistanceMetric { kMahalanobis, kJaccard };

struct DistanceSpec {
  std::vector<std::string> variables;
  DistanceMetric metric = DistanceMetric::kMahalanobis;
  // Missing values are always handled by the worst-case fills below.

  void validate(const Schema& schema) const;
};

struct CovarianceModel {
  std::vector<std::string> variables;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd inverse;
  double determinant = 0.0;
  double rcond = 0.0;  // reciprocal condition number (symmetric eigenvalues)
  std::vector<CorrelationDiagnostic> top_correlations;
};

// Observed per-variable statistics of the original data on the encoded
// scale (ordinals as ranks); used by the worst-case fills.
struct VariableRange {
  double min = 0.0, max = 0.0, mean = 0.0;
};

struct DistanceModel {
  DistanceSpec spec;
  std::vector<int> columns;           // schema column per spec variable
  std::vector<VariableRange> ranges;
  CovarianceModel covariance;         // Mahalanobis only
};

// Unbiased (n-1) covariance of the encoded original rows, missing cells
// filled worst-case (alternating max/min per variable in row order). Throws
// NearSingularError with the top-5 most correlated pairs when the
// reciprocal condition number falls below 1e-8 or the inverse fails the
// identity-product check.
CovarianceModel fit_covariance(const Dataset& orig, const DistanceSpec& spec);

// Fits ranges plus, for Mahalanobis, the covariance model.
DistanceModel fit_distance_model(const Dataset& orig, const DistanceSpec& spec);

// Row encoded on the distance scale: quantitative value, 1-based ordinal
// rank, or 0/1; NaN where missing.
std::vector<double> encode_row(const Dataset& data, std::size_t row,
                               const DistanceModel& model);

// Distance between two fully observed encoded rows: sqrt of the Mahalanobis
// quadratic form, or the Jaccard distance over 1-valued coordinates.
double distance(std::span<const double> a, std::span<const double> b,
                const DistanceModel& model);

enum class PairKind { kOrigOrig, kSynthOrig };

// In-place worst-case fill of a pair of encoded rows. Original-original
// fills maximize the distance (both missing: max/min; one missing: the
// bound farther from the observed value); synthetic-original fills minimize
// it (one missing: copy the observed value; both: the variable mean).
// For kSynthOrig, `a` is the synthetic row.
void worst_case_fill(PairKind kind, std::span<double> a, std::span<double> b,
                     const DistanceModel& model);

struct FilterOutcome {
  Dataset retained;
  Dataset removed;
  std::vector<char> kept;  // per synthetic row
};

// Algorithm: for each synthetic row find its nearest original o* (ties to
// the lowest row index); the row is removed iff it lies strictly closer to
// o* than o*'s own nearest original neighbor.
FilterOutcome filter_rows(const Dataset& orig, const Dataset& synth,
                          const DistanceModel& model);

struct FilterRound {
  std::size_t generated = 0;
  std::size_t retained = 0;
  double acceptance = 0.0;
};

struct FilterReport {
  std::vector<FilterRound> rounds;
  std::size_t target = 0;
  bool reached = false;
  double covariance_determinant = 0.0;
  double covariance_rcond = 0.0;
  std::vector<CorrelationDiagnostic> top_correlations;
};

// Loops synthesize -> filter until `target` retained rows accumulate
// (overshoot truncated), throwing TargetNotReachedError with acceptance
// statistics after max_rounds. Row streams continue across rounds, so round
// one reproduces plain synthesize() with the same cart seed.
Dataset filtered_synthesize(const Dataset& orig,
                            const std::vector<std::string>& order,
                            const CartParams& cart_params,
                            const DistanceSpec& spec, std::size_t target,
                            std::size_t max_rounds,
                            FilterReport* report = nullptr);

}  // namespace synthguard
