#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synthguard/cart.hpp"
#include "synthguard/dataset.hpp"

namespace synthguard {

// Keys/targets plus a proximity radius for every quantitative key or
// target. Quantitative variables compare through max(0, 1 - |diff|/radius);
// ordinal, binary and nominal variables compare exactly, with missing as
// its own category.
struct GtcapConfig {
  std::vector<std::string> keys;
  std::vector<std::string> targets;
  std::map<std::string, double> radii;

  void validate(const Schema& schema) const;
};

// Proximity coefficient between two rows over the given variables: 0 on any
// categorical mismatch, else 1 when no quantitative variable is present,
// else the mean of max(0, 1 - |diff|/radius). A missing quantitative cell
// contributes 1 when both sides are missing and 0 otherwise.
double prox_coef(const Schema& schema, const std::vector<double>& row1,
                 const std::vector<double>& row2,
                 const std::vector<std::string>& variables,
                 const std::map<std::string, double>& radii);

// Proximity-weighted conditional attribution probability of the row's
// targets given its keys, evaluated against `data`; 0 when no row carries
// any key proximity.
double gtcap_row(const Dataset& data, const std::vector<double>& row,
                 const GtcapConfig& cfg);

// Unconditional baseline: mean target proximity of the row against every
// data row.
double univariate_prediction(const Dataset& data, const std::vector<double>& row,
                             const GtcapConfig& cfg);

// Rows whose summed key proximity to every other row stays below 1; reduces
// to exact key-combination uniqueness when all keys are categorical.
std::vector<std::size_t> statistical_uniques(const Dataset& orig,
                                             const GtcapConfig& cfg);

struct GtcapRowResult {
  std::size_t orig_row = 0;
  double synth_value = 0.0;
  double base_value = 0.0;
  double orig_value = 0.0;
  double normalized = 0.0;  // (synth - base) / (orig - base), unclamped
  bool skipped = false;     // |orig - base| < 1e-9
  bool synth_zero_denominator = false;
};

struct GtcapReport {
  std::vector<GtcapRowResult> uniques;
  double mean = 0.0;  // over non-skipped uniques; NaN when none remain
  std::size_t n_uniques = 0;
  std::size_t skipped = 0;
  std::size_t zero_denominator = 0;
  std::string note;  // set when there is nothing to average
};

GtcapReport mean_gtcap(const Dataset& orig, const Dataset& synth,
                       const GtcapConfig& cfg);

struct PmseReport {
  double pmse = 0.0;
  double synthetic_share = 0.0;  // c
  double standardized_ratio = 0.0;
  double null_mean = 0.0;
  int permutations = 0;
  std::vector<std::string> pair_variables;
  std::vector<std::vector<double>> pair_ratios;  // NaN on/under the diagonal
};

// Propensity-score MSE: stack orig (label 0) and synth (label 1), fit a
// CART on the label with the given predictors (all shared variables when
// empty), read leaf-level label means, and average (p_i - c)^2.
PmseReport pmse(const Dataset& orig, const Dataset& synth,
                const CartParams& model_params,
                const std::vector<std::string>& predictors = {});

// Observed pMSE divided by the mean pMSE over `permutations` random
// relabelings of the stacked data. Throws DegenerateNullError when the null
// mean is zero.
double standardized_pmse_ratio(const Dataset& orig, const Dataset& synth,
                               const std::vector<std::string>& variables,
                               const CartParams& model_params,
                               int permutations, std::uint64_t seed);

// Fills the ratio and, when pairs is set, the per-pair ratio matrix over
// every two-variable predictor set (NaN where a pair's null degenerates).
PmseReport pmse_report(const Dataset& orig, const Dataset& synth,
                       const CartParams& model_params, int permutations,
                       std::uint64_t seed, bool pairs);

struct EstimateQuery {
  std::string filter_variable;  // ordinal or binary
  double filter_min = 0.0;      // subgroup: value >= filter_min
  std::vector<std::string> targets;  // binary outcomes

  void validate(const Schema& schema) const;
};

struct EstimateTable {
  std::vector<std::string> dataset_names;
  std::vector<std::string> targets;
  // prevalence[target][dataset]; empty subgroup -> nullopt
  std::vector<std::vector<std::optional<double>>> prevalence;
  std::vector<std::size_t> subgroup_sizes;
};

// Subgroup prevalence of each binary target per dataset (the original first,
// then the synthetic ones), exact values; display rounding is the caller's.
EstimateTable replicate_estimates(
    const std::vector<std::pair<std::string, const Dataset*>>& datasets,
    const EstimateQuery& query);

struct CategoricalMarginal {
  std::string variable;
  std::vector<std::string> labels;  // levels plus MISSING when present
  std::vector<std::size_t> orig_counts;
  std::vector<std::size_t> synth_counts;
};

struct QuantitativeMarginal {
  std::string variable;
  std::vector<double> bin_edges;  // shared across both datasets
  std::vector<std::size_t> orig_counts;
  std::vector<std::size_t> synth_counts;
  std::size_t orig_missing = 0;
  std::size_t synth_missing = 0;
  double ks = 0.0;
};

struct MarginalComparison {
  std::vector<CategoricalMarginal> categorical;
  std::vector<QuantitativeMarginal> quantitative;
};

MarginalComparison compare_marginals(const Dataset& orig, const Dataset& synth);

// Long-format plot data: one row per bin/level with counts and shares for
// both datasets.
void write_marginals_csv(const MarginalComparison& cmp, const std::string& path);

}  // namespace synthguard
