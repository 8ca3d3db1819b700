#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthguard/dataset.hpp"

namespace synthguard {

struct CartParams {
  int min_leaf = 33;
  int min_split = 100;
  int max_depth = 30;
  std::uint64_t seed = 0;

  void validate() const;  // min_leaf >= 1, min_split >= 2*min_leaf, max_depth >= 1
};

// Binary split. Numeric predictors (quantitative/ordinal, ordinals on their
// 1-based level ranks) go left iff value <= threshold; categorical
// predictors (binary/nominal) go left iff their category code is in
// left_mask. Rows missing a numeric predictor follow the child that holds
// the majority of the node's donors (missing_left).
struct SplitRule {
  int column = -1;
  bool numeric = true;
  double threshold = 0.0;
  std::uint32_t left_mask = 0;
  bool missing_left = true;
};

struct TreeNode {
  SplitRule rule;
  int left = -1;
  int right = -1;
  std::vector<std::int32_t> rows;  // leaf only: donor row indices

  bool is_leaf() const { return left < 0; }
};

// Category code of a binary/nominal cell: the value (binary) or level index
// (nominal), with the last slot reserved for missing when allowed.
int category_code(const Variable& var, double cell);
// Numeric coordinate used for splitting: the value for quantitative cells,
// the 1-based rank for ordinal ones, NaN for missing.
double numeric_coordinate(const Variable& var, double cell);

class Tree {
 public:
  Tree() = default;
  Tree(int outcome_column, std::vector<TreeNode> nodes)
      : outcome_(outcome_column), nodes_(std::move(nodes)) {}

  int outcome_column() const { return outcome_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  // Deterministic routing of a (partial) row; returns the leaf node index.
  int route(const Schema& schema, const std::vector<double>& row) const;

  nlohmann::json to_json(const Schema& schema) const;  // debugging only

 private:
  int outcome_ = -1;
  std::vector<TreeNode> nodes_;
};

// Greedy recursive partitioning. Split quality is Gini impurity decrease for
// binary/nominal outcomes and variance reduction for quantitative/ordinal
// ones. Quantitative/ordinal outcomes are fitted on rows where the outcome
// is observed; binary/nominal outcomes treat missing as an extra category.
// Ties between equally good splits go to the earliest predictor in
// `predictors`, then to the lowest threshold (or category mask).
Tree build_tree(const Dataset& data, const std::string& outcome,
                const std::vector<std::string>& predictors,
                const CartParams& params);

// Leaf index for a row (wrapper over Tree::route).
int leaf_of(const Tree& tree, const Schema& schema,
            const std::vector<double>& row);

// Sequential synthesizer: one tree per variable, each fitted with all
// earlier-ordered variables as predictors; the first variable is a bootstrap
// of its marginal. Quantitative/ordinal variables that contain missing
// values get an auxiliary is-missing indicator synthesized immediately
// before them, with the value tree fitted on complete cases.
class Synthesizer {
 public:
  Synthesizer(const Dataset& train, std::vector<std::string> order,
              const CartParams& params);

  // Generates m rows. Row i draws from a stream keyed on
  // (params.seed, row_offset + i), so batches can be produced in any order
  // or in parallel without changing the result.
  Dataset generate(std::size_t m, std::uint64_t row_offset = 0) const;

  // Fitted trees, aligned with plan_steps(); the first step has no tree.
  const std::vector<Tree>& trees() const { return trees_; }
  const Dataset& augmented_train() const { return augmented_; }

 private:
  struct Step {
    int column = -1;       // column in the augmented dataset
    int tree = -1;         // index into trees_, -1 for the bootstrap step
    int aux_of = -1;       // for aux indicators: augmented column they guard
    int guarded_by = -1;   // for value columns: their aux indicator column
  };

  Dataset augmented_;
  Schema output_schema_;
  std::vector<int> output_columns_;  // augmented column per output column
  std::vector<Step> steps_;
  std::vector<Tree> trees_;
  CartParams params_;
};

// Fully synthetic dataset of m rows, deterministic given params.seed.
Dataset synthesize(const Dataset& data, const std::vector<std::string>& order,
                   const CartParams& params, std::size_t m);

}  // namespace synthguard
