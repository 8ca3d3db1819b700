#include "synthguard/cart.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "synthguard/errors.hpp"
#include "synthguard/parallel.hpp"
#include "synthguard/rng.hpp"

namespace synthguard {

void CartParams::validate() const {
  if (min_leaf < 1) throw ValidationError("cart: min_leaf must be >= 1");
  if (min_split < 2 * min_leaf)
    throw ValidationError("cart: min_split must be >= 2*min_leaf");
  if (max_depth < 1) throw ValidationError("cart: max_depth must be >= 1");
}

int category_code(const Variable& var, double cell) {
  switch (var.kind) {
    case VariableKind::kBinary:
      if (is_missing(cell)) {
        if (!var.missing_allowed)
          throw ValidationError("missing cell in binary variable " + var.name);
        return 2;
      }
      return static_cast<int>(cell);
    case VariableKind::kNominal:
      if (is_missing(cell)) {
        if (!var.missing_allowed)
          throw ValidationError("missing cell in nominal variable " + var.name);
        return static_cast<int>(var.nominal_levels.size());
      }
      return static_cast<int>(cell);
    default:
      throw ValidationError("category_code on numeric variable " + var.name);
  }
}

double numeric_coordinate(const Variable& var, double cell) {
  if (is_missing(cell)) return missing_value();
  if (var.kind == VariableKind::kOrdinal)
    return static_cast<double>(var.ordinal_rank(cell));
  return cell;
}

int Tree::route(const Schema& schema, const std::vector<double>& row) const {
  int node = 0;
  while (!nodes_[static_cast<std::size_t>(node)].is_leaf()) {
    const TreeNode& nd = nodes_[static_cast<std::size_t>(node)];
    const Variable& var = schema.var(nd.rule.column);
    const double cell = row[static_cast<std::size_t>(nd.rule.column)];
    bool left;
    if (nd.rule.numeric) {
      const double x = numeric_coordinate(var, cell);
      left = is_missing(x) ? nd.rule.missing_left : x <= nd.rule.threshold;
    } else {
      const int code = category_code(var, cell);
      left = (nd.rule.left_mask >> code) & 1u;
    }
    node = left ? nd.left : nd.right;
  }
  return node;
}

nlohmann::json Tree::to_json(const Schema& schema) const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nd : nodes_) {
    nlohmann::json j;
    if (nd.is_leaf()) {
      j["size"] = nd.rows.size();
    } else {
      j["variable"] = schema.var(nd.rule.column).name;
      if (nd.rule.numeric) {
        j["threshold"] = nd.rule.threshold;
        j["missing_left"] = nd.rule.missing_left;
      } else {
        j["left_mask"] = nd.rule.left_mask;
      }
      j["left"] = nd.left;
      j["right"] = nd.right;
    }
    nodes.push_back(std::move(j));
  }
  nlohmann::json out;
  out["outcome"] = schema.var(outcome_).name;
  out["nodes"] = std::move(nodes);
  return out;
}

int leaf_of(const Tree& tree, const Schema& schema,
            const std::vector<double>& row) {
  return tree.route(schema, row);
}

namespace {

constexpr int kMaxEnumeratedCategories = 16;

struct Candidate {
  bool found = false;
  double gain = 0.0;
  int predictor_order = 0;  // position in the predictors list
  SplitRule rule;
  // Final child membership for the node's rows (true = left), aligned with
  // the node row list. Kept so the builder partitions exactly as routing
  // will.
  std::vector<char> to_left;

  // Strictly-better ordering with the spec tie-breaks: higher gain first,
  // then earlier predictor, then lower threshold / category mask.
  bool better_than(const Candidate& other) const {
    if (!other.found) return found;
    if (gain != other.gain) return gain > other.gain;
    if (predictor_order != other.predictor_order)
      return predictor_order < other.predictor_order;
    if (rule.numeric != other.rule.numeric) return rule.numeric;
    if (rule.numeric) return rule.threshold < other.rule.threshold;
    return rule.left_mask < other.rule.left_mask;
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, int outcome, std::vector<int> predictors,
              const CartParams& params)
      : data_(data),
        outcome_(outcome),
        predictors_(std::move(predictors)),
        params_(params) {
    const Variable& out_var = data_.schema().var(outcome_);
    classification_ = !out_var.is_numeric();
    std::vector<std::int32_t> root;
    if (classification_) {
      n_classes_ = out_var.category_cardinality();
      codes_.resize(data_.n_rows());
      for (std::size_t r = 0; r < data_.n_rows(); ++r) {
        codes_[r] = category_code(out_var, data_.cell(r, outcome_));
        root.push_back(static_cast<std::int32_t>(r));
      }
      bool any_observed = false;
      for (std::size_t r = 0; r < data_.n_rows(); ++r)
        any_observed |= !is_missing(data_.cell(r, outcome_));
      if (!any_observed)
        throw ValidationError("build_tree: outcome " + out_var.name +
                              " is entirely missing");
    } else {
      y_.assign(data_.n_rows(), 0.0);
      for (std::size_t r = 0; r < data_.n_rows(); ++r) {
        const double v = numeric_coordinate(out_var, data_.cell(r, outcome_));
        if (!is_missing(v)) {
          y_[r] = v;
          root.push_back(static_cast<std::int32_t>(r));
        }
      }
      if (root.empty())
        throw ValidationError("build_tree: outcome " + out_var.name +
                              " is entirely missing");
      // Center on the fitted rows; variance reductions are shift-invariant
      // and this keeps the sum-of-squares arithmetic well conditioned.
      double mean = 0.0;
      for (auto r : root) mean += y_[static_cast<std::size_t>(r)];
      mean /= static_cast<double>(root.size());
      for (auto r : root) y_[static_cast<std::size_t>(r)] -= mean;
    }
    if (root.empty()) throw ValidationError("build_tree: empty data");
    build(std::move(root), 1);
  }

  Tree take(int outcome) { return Tree(outcome, std::move(nodes_)); }

 private:
  int build(std::vector<std::int32_t> rows, int depth) {
    const int node_index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    Candidate best;
    const auto n = static_cast<int>(rows.size());
    if (n >= params_.min_split && depth < params_.max_depth && !pure(rows))
      best = best_split(rows);

    if (!best.found) {
      nodes_[static_cast<std::size_t>(node_index)].rows = std::move(rows);
      return node_index;
    }

    std::vector<std::int32_t> left_rows, right_rows;
    for (std::size_t i = 0; i < rows.size(); ++i)
      (best.to_left[i] ? left_rows : right_rows).push_back(rows[i]);
    rows.clear();
    rows.shrink_to_fit();

    const int left = build(std::move(left_rows), depth + 1);
    const int right = build(std::move(right_rows), depth + 1);
    TreeNode& nd = nodes_[static_cast<std::size_t>(node_index)];
    nd.rule = best.rule;
    nd.left = left;
    nd.right = right;
    return node_index;
  }

  bool pure(const std::vector<std::int32_t>& rows) const {
    if (classification_) {
      const int first = codes_[static_cast<std::size_t>(rows[0])];
      for (auto r : rows)
        if (codes_[static_cast<std::size_t>(r)] != first) return false;
      return true;
    }
    const double first = y_[static_cast<std::size_t>(rows[0])];
    for (auto r : rows)
      if (y_[static_cast<std::size_t>(r)] != first) return false;
    return true;
  }

  // Node impurity scaled by size: sum of squared deviations for regression,
  // n * Gini for classification. Gains are decreases of this quantity.
  struct Stats {
    double n = 0.0;
    double sum = 0.0, sumsq = 0.0;        // regression
    std::vector<double> class_counts;     // classification

    double impurity(bool classification) const {
      if (n == 0.0) return 0.0;
      if (!classification) return sumsq - sum * sum / n;
      double sq = 0.0;
      for (double c : class_counts) sq += c * c;
      return n * (1.0 - sq / (n * n));
    }
  };

  Stats make_stats() const {
    Stats s;
    if (classification_) s.class_counts.assign(static_cast<std::size_t>(n_classes_), 0.0);
    return s;
  }

  void add_row(Stats& s, std::int32_t r) const {
    s.n += 1.0;
    if (classification_) {
      s.class_counts[static_cast<std::size_t>(codes_[static_cast<std::size_t>(r)])] += 1.0;
    } else {
      const double v = y_[static_cast<std::size_t>(r)];
      s.sum += v;
      s.sumsq += v * v;
    }
  }

  static void add_stats(Stats& into, const Stats& from) {
    into.n += from.n;
    into.sum += from.sum;
    into.sumsq += from.sumsq;
    for (std::size_t i = 0; i < from.class_counts.size(); ++i)
      into.class_counts[i] += from.class_counts[i];
  }

  Candidate best_split(const std::vector<std::int32_t>& rows) const {
    Candidate best;
    for (std::size_t p = 0; p < predictors_.size(); ++p) {
      Candidate c;
      const Variable& var = data_.schema().var(predictors_[p]);
      if (var.is_numeric())
        c = numeric_split(rows, static_cast<int>(p));
      else
        c = categorical_split(rows, static_cast<int>(p));
      if (c.better_than(best)) best = std::move(c);
    }
    return best;
  }

  Candidate numeric_split(const std::vector<std::int32_t>& rows,
                          int predictor_order) const {
    const int col = predictors_[static_cast<std::size_t>(predictor_order)];
    const Variable& var = data_.schema().var(col);

    std::vector<std::pair<double, std::int32_t>> observed;  // (value, pos in rows)
    Stats missing = make_stats();
    std::int32_t n_missing = 0;
    observed.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double x = numeric_coordinate(var, data_.cell(
          static_cast<std::size_t>(rows[i]), col));
      if (is_missing(x)) {
        add_row(missing, rows[i]);
        ++n_missing;
      } else {
        observed.emplace_back(x, static_cast<std::int32_t>(i));
      }
    }
    if (observed.size() < 2) return {};
    std::sort(observed.begin(), observed.end());

    Stats parent = make_stats();
    for (auto r : rows) add_row(parent, r);
    const double parent_impurity = parent.impurity(classification_);
    const double min_gain = 1e-10 * std::max(parent_impurity, 1e-12);

    Candidate best;
    Stats left = make_stats();
    for (std::size_t i = 0; i + 1 < observed.size(); ++i) {
      add_row(left, rows[static_cast<std::size_t>(observed[i].second)]);
      if (observed[i].first == observed[i + 1].first) continue;

      const auto n_left_obs = static_cast<std::int32_t>(i + 1);
      const auto n_right_obs = static_cast<std::int32_t>(observed.size() - i - 1);
      // Rows with a missing predictor join the side holding the majority of
      // the observed donors (ties go left), matching routing behavior.
      const bool missing_left = n_left_obs >= n_right_obs;

      const double n_l = n_left_obs + (missing_left ? n_missing : 0);
      const double n_r = n_right_obs + (missing_left ? 0 : n_missing);
      if (n_l < params_.min_leaf || n_r < params_.min_leaf) continue;

      Stats l = left;
      Stats r = parent;
      sub_stats(r, left);
      if (missing_left) {
        add_stats(l, missing);
        sub_stats(r, missing);
      }
      const double gain =
          parent_impurity - l.impurity(classification_) - r.impurity(classification_);
      if (gain <= min_gain) continue;

      Candidate c;
      c.found = true;
      c.gain = gain;
      c.predictor_order = predictor_order;
      c.rule.column = col;
      c.rule.numeric = true;
      c.rule.threshold = midpoint(observed[i].first, observed[i + 1].first);
      c.rule.missing_left = missing_left;
      if (c.better_than(best)) best = std::move(c);
    }
    if (best.found) {
      best.to_left.assign(rows.size(), 0);
      for (const auto& [value, pos] : observed) {
        if (value <= best.rule.threshold)
          best.to_left[static_cast<std::size_t>(pos)] = 1;
      }
      if (best.rule.missing_left) {
        for (std::size_t k = 0; k < rows.size(); ++k) {
          const double x = numeric_coordinate(var, data_.cell(
              static_cast<std::size_t>(rows[k]), col));
          if (is_missing(x)) best.to_left[k] = 1;
        }
      }
    }
    return best;
  }

  static void sub_stats(Stats& from, const Stats& what) {
    from.n -= what.n;
    from.sum -= what.sum;
    from.sumsq -= what.sumsq;
    for (std::size_t i = 0; i < what.class_counts.size(); ++i)
      from.class_counts[i] -= what.class_counts[i];
  }

  // Threshold strictly between two adjacent observed values.
  static double midpoint(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    if (mid > lo && mid < hi) return mid;
    return lo;  // adjacent doubles: <= lo still separates the two values
  }

  Candidate categorical_split(const std::vector<std::int32_t>& rows,
                              int predictor_order) const {
    const int col = predictors_[static_cast<std::size_t>(predictor_order)];
    const Variable& var = data_.schema().var(col);
    const int n_codes = var.category_cardinality();

    std::vector<Stats> per_code(static_cast<std::size_t>(n_codes));
    for (auto& s : per_code) s = make_stats();
    std::vector<int> code_of(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int code = category_code(var, data_.cell(
          static_cast<std::size_t>(rows[i]), col));
      code_of[i] = code;
      add_row(per_code[static_cast<std::size_t>(code)], rows[i]);
    }

    std::vector<int> present;
    for (int c = 0; c < n_codes; ++c)
      if (per_code[static_cast<std::size_t>(c)].n > 0) present.push_back(c);
    if (present.size() < 2) return {};

    Stats parent = make_stats();
    for (auto r : rows) add_row(parent, r);
    const double parent_impurity = parent.impurity(classification_);
    const double min_gain = 1e-10 * std::max(parent_impurity, 1e-12);

    std::vector<std::uint32_t> masks;
    if (present.size() <= kMaxEnumeratedCategories) {
      // All proper subsets that contain the lowest present code (the
      // complement split is equivalent, so each partition shows up once).
      const std::size_t rest = present.size() - 1;
      for (std::uint32_t bits = 0; bits + 1 < (1u << rest); ++bits) {
        std::uint32_t mask = 1u << present[0];
        for (std::size_t b = 0; b < rest; ++b)
          if ((bits >> b) & 1u) mask |= 1u << present[b + 1];
        masks.push_back(mask);
      }
    } else {
      // Too many levels to enumerate: order categories by mean outcome
      // (class-0 share for classification) and scan prefix splits.
      std::vector<std::pair<double, int>> order;
      for (int c : present) {
        const Stats& s = per_code[static_cast<std::size_t>(c)];
        const double score = classification_ ? s.class_counts[0] / s.n : s.sum / s.n;
        order.emplace_back(score, c);
      }
      std::sort(order.begin(), order.end());
      std::uint32_t mask = 0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        mask |= 1u << order[i].second;
        masks.push_back(mask);
      }
    }

    Candidate best;
    for (const std::uint32_t mask : masks) {
      Stats l = make_stats();
      for (int c : present)
        if ((mask >> c) & 1u) add_stats(l, per_code[static_cast<std::size_t>(c)]);
      Stats r = parent;
      sub_stats(r, l);
      if (l.n < params_.min_leaf || r.n < params_.min_leaf) continue;
      const double gain =
          parent_impurity - l.impurity(classification_) - r.impurity(classification_);
      if (gain <= min_gain) continue;

      Candidate c;
      c.found = true;
      c.gain = gain;
      c.predictor_order = predictor_order;
      c.rule.column = col;
      c.rule.numeric = false;
      c.rule.left_mask = mask;
      if (c.better_than(best)) best = std::move(c);
    }
    if (best.found) {
      best.to_left.assign(rows.size(), 0);
      for (std::size_t i = 0; i < rows.size(); ++i)
        best.to_left[i] = (best.rule.left_mask >> code_of[i]) & 1u;
    }
    return best;
  }

  const Dataset& data_;
  int outcome_;
  std::vector<int> predictors_;
  CartParams params_;
  bool classification_ = false;
  int n_classes_ = 0;
  std::vector<int> codes_;  // classification outcome codes
  std::vector<double> y_;   // regression outcome (centered)
  std::vector<TreeNode> nodes_;
};

}  // namespace

Tree build_tree(const Dataset& data, const std::string& outcome,
                const std::vector<std::string>& predictors,
                const CartParams& params) {
  params.validate();
  if (data.n_rows() == 0) throw ValidationError("build_tree: empty data");
  const int out_col = data.schema().require(outcome);
  std::vector<int> pred_cols;
  pred_cols.reserve(predictors.size());
  for (const auto& p : predictors) {
    const int c = data.schema().require(p);
    if (c == out_col)
      throw ValidationError("build_tree: predictor equals outcome: " + p);
    pred_cols.push_back(c);
  }
  TreeBuilder builder(data, out_col, std::move(pred_cols), params);
  return builder.take(out_col);
}

Synthesizer::Synthesizer(const Dataset& train, std::vector<std::string> order,
                         const CartParams& params)
    : params_(params) {
  params_.validate();
  if (train.n_rows() == 0) throw ValidationError("synthesize: empty data");

  if (order.empty()) {
    for (const auto& v : train.schema().variables()) order.push_back(v.name);
  }
  if (static_cast<int>(order.size()) != train.schema().size())
    throw ValidationError("synthesize: order must be a permutation of the schema");
  std::vector<bool> seen(static_cast<std::size_t>(train.schema().size()), false);
  for (const auto& name : order) {
    const int c = train.schema().require(name);
    if (seen[static_cast<std::size_t>(c)])
      throw ValidationError("synthesize: duplicate variable in order: " + name);
    seen[static_cast<std::size_t>(c)] = true;
  }

  // Augmented training data: original columns reordered by `order`, with an
  // is-missing indicator inserted before each numeric column that actually
  // contains missing values.
  std::vector<Variable> aug_vars;
  std::vector<int> source_col;   // original column, or -(col+1) for indicators
  output_schema_ = train.schema();
  for (const auto& name : order) {
    const int col = train.schema().require(name);
    const Variable& var = train.schema().var(col);
    bool has_missing = false;
    for (double v : train.column(col)) has_missing |= is_missing(v);
    if (var.is_numeric() && has_missing) {
      Variable aux;
      aux.name = var.name + "__missing";
      if (train.schema().index_of(aux.name) >= 0)
        throw ValidationError("synthesize: auxiliary name collides with " + aux.name);
      aux.kind = VariableKind::kBinary;
      aug_vars.push_back(std::move(aux));
      source_col.push_back(-(col + 1));
    }
    aug_vars.push_back(var);
    source_col.push_back(col);
  }

  augmented_ = Dataset(Schema(aug_vars), train.n_rows());
  for (std::size_t j = 0; j < source_col.size(); ++j) {
    const int sc = source_col[j];
    for (std::size_t r = 0; r < train.n_rows(); ++r) {
      const double v = sc >= 0
          ? train.cell(r, sc)
          : (is_missing(train.cell(r, -sc - 1)) ? 1.0 : 0.0);
      augmented_.set_cell(r, static_cast<int>(j), v);
    }
  }

  // Output columns in the original schema order.
  output_columns_.assign(static_cast<std::size_t>(train.schema().size()), -1);
  for (std::size_t j = 0; j < source_col.size(); ++j) {
    if (source_col[j] >= 0)
      output_columns_[static_cast<std::size_t>(source_col[j])] = static_cast<int>(j);
  }

  // Plan: one step per augmented column; fit trees for every step after the
  // first, predictors being all earlier augmented columns.
  std::vector<std::string> earlier;
  for (std::size_t j = 0; j < source_col.size(); ++j) {
    Step step;
    step.column = static_cast<int>(j);
    if (source_col[j] < 0) step.aux_of = static_cast<int>(j) + 1;
    if (j > 0 && source_col[j] >= 0 && source_col[j - 1] == -(source_col[j] + 1))
      step.guarded_by = static_cast<int>(j) - 1;
    if (j > 0) {
      trees_.push_back(build_tree(augmented_, aug_vars[j].name, earlier, params_));
      step.tree = static_cast<int>(trees_.size()) - 1;
    }
    steps_.push_back(step);
    earlier.push_back(aug_vars[j].name);
  }
}

Dataset Synthesizer::generate(std::size_t m, std::uint64_t row_offset) const {
  if (m < 1) throw ValidationError("synthesize: m must be >= 1");
  Dataset out(output_schema_, m);
  const std::size_t n_train = augmented_.n_rows();
  const Schema& aug_schema = augmented_.schema();

  parallel_for(m, [&](std::size_t i) {
    Rng rng(derive_key(params_.seed, "synth-row", row_offset + i));
    std::vector<double> partial(static_cast<std::size_t>(aug_schema.size()),
                                missing_value());
    for (const Step& step : steps_) {
      double value;
      if (step.guarded_by >= 0 &&
          partial[static_cast<std::size_t>(step.guarded_by)] == 1.0) {
        value = missing_value();
      } else if (step.tree < 0) {
        // Bootstrap draw from the first variable's marginal.
        const std::size_t donor = rng.uniform_int(n_train);
        value = augmented_.cell(donor, step.column);
      } else {
        const Tree& tree = trees_[static_cast<std::size_t>(step.tree)];
        const int leaf = tree.route(aug_schema, partial);
        const auto& donors = tree.nodes()[static_cast<std::size_t>(leaf)].rows;
        const auto pick = donors[rng.uniform_int(donors.size())];
        value = augmented_.cell(static_cast<std::size_t>(pick), step.column);
      }
      partial[static_cast<std::size_t>(step.column)] = value;
    }
    for (int c = 0; c < out.n_cols(); ++c)
      out.set_cell(i, c, partial[static_cast<std::size_t>(output_columns_[static_cast<std::size_t>(c)])]);
  });
  return out;
}

Dataset synthesize(const Dataset& data, const std::vector<std::string>& order,
                   const CartParams& params, std::size_t m) {
  return Synthesizer(data, order, params).generate(m);
}

}  // namespace synthguard
