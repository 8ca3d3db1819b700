#include "synthguard/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "synthguard/csv.hpp"
#include "synthguard/errors.hpp"
#include "synthguard/parallel.hpp"
#include "synthguard/rng.hpp"
#include "synthguard/stats.hpp"

namespace synthguard {

namespace {

bool is_gtcap_quantitative(const Variable& var) {
  return var.kind == VariableKind::kQuantitative;
}

// Exact categorical comparison with missing as its own category.
bool same_category(double a, double b) {
  if (is_missing(a) || is_missing(b)) return is_missing(a) && is_missing(b);
  return a == b;
}

struct ProxPlan {
  std::vector<int> cat_cols;
  std::vector<int> num_cols;
  std::vector<double> num_radii;
};

ProxPlan make_prox_plan(const Schema& schema,
                        const std::vector<std::string>& variables,
                        const std::map<std::string, double>& radii) {
  ProxPlan plan;
  for (const auto& name : variables) {
    const int col = schema.require(name);
    if (is_gtcap_quantitative(schema.var(col))) {
      const auto it = radii.find(name);
      if (it == radii.end())
        throw ValidationError("gtcap: no radius for quantitative variable " + name);
      if (!(it->second > 0.0))
        throw ValidationError("gtcap: radius for " + name + " must be > 0");
      plan.num_cols.push_back(col);
      plan.num_radii.push_back(it->second);
    } else {
      plan.cat_cols.push_back(col);
    }
  }
  return plan;
}

double prox_from_plan(const ProxPlan& plan, const std::vector<double>& row1,
                      const std::vector<double>& row2) {
  for (int col : plan.cat_cols) {
    if (!same_category(row1[static_cast<std::size_t>(col)],
                       row2[static_cast<std::size_t>(col)]))
      return 0.0;
  }
  if (plan.num_cols.empty()) return 1.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < plan.num_cols.size(); ++j) {
    const double a = row1[static_cast<std::size_t>(plan.num_cols[j])];
    const double b = row2[static_cast<std::size_t>(plan.num_cols[j])];
    if (is_missing(a) || is_missing(b)) {
      sum += (is_missing(a) && is_missing(b)) ? 1.0 : 0.0;
      continue;
    }
    sum += std::max(0.0, 1.0 - std::fabs(a - b) / plan.num_radii[j]);
  }
  return sum / static_cast<double>(plan.num_cols.size());
}

struct GtcapRowDetail {
  double value = 0.0;
  bool zero_denominator = false;
};

GtcapRowDetail gtcap_row_detail(const Dataset& data,
                                const std::vector<double>& row,
                                const ProxPlan& keys, const ProxPlan& targets) {
  double weight = 0.0, weighted = 0.0;
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    const std::vector<double> other = data.row(r);
    const double k = prox_from_plan(keys, row, other);
    if (k == 0.0) continue;
    weight += k;
    weighted += k * prox_from_plan(targets, row, other);
  }
  if (weight == 0.0) return {0.0, true};
  return {weighted / weight, false};
}

}  // namespace

void GtcapConfig::validate(const Schema& schema) const {
  if (keys.empty()) throw ValidationError("gtcap: no key variables");
  if (targets.empty()) throw ValidationError("gtcap: no target variables");
  for (const auto& k : keys) {
    if (std::find(targets.begin(), targets.end(), k) != targets.end())
      throw ValidationError("gtcap: variable in both keys and targets: " + k);
  }
  make_prox_plan(schema, keys, radii);
  make_prox_plan(schema, targets, radii);
}

double prox_coef(const Schema& schema, const std::vector<double>& row1,
                 const std::vector<double>& row2,
                 const std::vector<std::string>& variables,
                 const std::map<std::string, double>& radii) {
  if (variables.empty()) throw ValidationError("prox_coef: no variables");
  return prox_from_plan(make_prox_plan(schema, variables, radii), row1, row2);
}

double gtcap_row(const Dataset& data, const std::vector<double>& row,
                 const GtcapConfig& cfg) {
  cfg.validate(data.schema());
  const ProxPlan keys = make_prox_plan(data.schema(), cfg.keys, cfg.radii);
  const ProxPlan targets = make_prox_plan(data.schema(), cfg.targets, cfg.radii);
  return gtcap_row_detail(data, row, keys, targets).value;
}

double univariate_prediction(const Dataset& data, const std::vector<double>& row,
                             const GtcapConfig& cfg) {
  cfg.validate(data.schema());
  const ProxPlan targets = make_prox_plan(data.schema(), cfg.targets, cfg.radii);
  double sum = 0.0;
  for (std::size_t r = 0; r < data.n_rows(); ++r)
    sum += prox_from_plan(targets, row, data.row(r));
  return sum / static_cast<double>(data.n_rows());
}

std::vector<std::size_t> statistical_uniques(const Dataset& orig,
                                             const GtcapConfig& cfg) {
  cfg.validate(orig.schema());
  const ProxPlan keys = make_prox_plan(orig.schema(), cfg.keys, cfg.radii);

  std::vector<std::vector<double>> rows(orig.n_rows());
  for (std::size_t r = 0; r < orig.n_rows(); ++r) rows[r] = orig.row(r);

  std::vector<char> unique(orig.n_rows(), 0);
  parallel_for(orig.n_rows(), [&](std::size_t r) {
    double sum = 0.0;
    for (std::size_t other = 0; other < orig.n_rows(); ++other) {
      if (other == r) continue;
      sum += prox_from_plan(keys, rows[r], rows[other]);
      if (sum >= 1.0) break;
    }
    unique[r] = sum < 1.0;
  });

  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < orig.n_rows(); ++r)
    if (unique[r]) out.push_back(r);
  return out;
}

GtcapReport mean_gtcap(const Dataset& orig, const Dataset& synth,
                       const GtcapConfig& cfg) {
  cfg.validate(orig.schema());
  cfg.validate(synth.schema());
  const ProxPlan keys = make_prox_plan(orig.schema(), cfg.keys, cfg.radii);
  const ProxPlan targets = make_prox_plan(orig.schema(), cfg.targets, cfg.radii);

  GtcapReport report;
  const std::vector<std::size_t> uniques = statistical_uniques(orig, cfg);
  report.n_uniques = uniques.size();
  if (uniques.empty()) {
    report.mean = std::numeric_limits<double>::quiet_NaN();
    report.note = "no statistical uniques under the configured keys";
    return report;
  }

  report.uniques.resize(uniques.size());
  parallel_for(uniques.size(), [&](std::size_t i) {
    const std::vector<double> row = orig.row(uniques[i]);
    GtcapRowResult res;
    res.orig_row = uniques[i];
    const GtcapRowDetail synth_detail =
        gtcap_row_detail(synth, row, keys, targets);
    res.synth_value = synth_detail.value;
    res.synth_zero_denominator = synth_detail.zero_denominator;
    res.base_value = [&] {
      double sum = 0.0;
      for (std::size_t r = 0; r < orig.n_rows(); ++r)
        sum += prox_from_plan(targets, row, orig.row(r));
      return sum / static_cast<double>(orig.n_rows());
    }();
    res.orig_value = gtcap_row_detail(orig, row, keys, targets).value;
    const double denom = res.orig_value - res.base_value;
    if (std::fabs(denom) < 1e-9) {
      res.skipped = true;
    } else {
      res.normalized = (res.synth_value - res.base_value) / denom;
    }
    report.uniques[i] = std::move(res);
  });

  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& res : report.uniques) {
    report.skipped += res.skipped;
    report.zero_denominator += res.synth_zero_denominator;
    if (!res.skipped) {
      sum += res.normalized;
      ++counted;
    }
  }
  if (counted == 0) {
    report.mean = std::numeric_limits<double>::quiet_NaN();
    report.note = "every unique had a degenerate normalization";
  } else {
    report.mean = sum / static_cast<double>(counted);
  }
  return report;
}

namespace {

constexpr const char* kLabelColumn = "__synthetic__";

Dataset stack_with_label(const Dataset& orig, const Dataset& synth) {
  if (!(orig.schema() == synth.schema()))
    throw ValidationError("pmse: original and synthetic schemas differ");
  if (orig.schema().index_of(kLabelColumn) >= 0)
    throw ValidationError("pmse: reserved column name in schema");

  std::vector<Variable> vars = orig.schema().variables();
  Variable label;
  label.name = kLabelColumn;
  label.kind = VariableKind::kBinary;
  vars.push_back(label);

  Dataset stacked(Schema(std::move(vars)), 0);
  std::vector<double> row;
  for (std::size_t r = 0; r < orig.n_rows(); ++r) {
    row = orig.row(r);
    row.push_back(0.0);
    stacked.append_row(row);
  }
  for (std::size_t r = 0; r < synth.n_rows(); ++r) {
    row = synth.row(r);
    row.push_back(1.0);
    stacked.append_row(row);
  }
  return stacked;
}

double pmse_of_labels(const Dataset& stacked,
                      const std::vector<std::string>& predictors,
                      const CartParams& params) {
  const Tree tree = build_tree(stacked, kLabelColumn, predictors, params);
  const int label_col = stacked.schema().require(kLabelColumn);
  const std::size_t n = stacked.n_rows();
  double ones = 0.0;
  for (std::size_t r = 0; r < n; ++r) ones += stacked.cell(r, label_col);
  const double c = ones / static_cast<double>(n);

  double total = 0.0;
  for (const auto& node : tree.nodes()) {
    if (!node.is_leaf()) continue;
    double leaf_ones = 0.0;
    for (auto r : node.rows)
      leaf_ones += stacked.cell(static_cast<std::size_t>(r), label_col);
    const double p = leaf_ones / static_cast<double>(node.rows.size());
    const double diff = p - c;
    total += diff * diff * static_cast<double>(node.rows.size());
  }
  return total / static_cast<double>(n);
}

std::vector<std::string> all_predictors(const Schema& schema) {
  std::vector<std::string> out;
  for (const auto& v : schema.variables()) out.push_back(v.name);
  return out;
}

}  // namespace

PmseReport pmse(const Dataset& orig, const Dataset& synth,
                const CartParams& model_params,
                const std::vector<std::string>& predictors) {
  const Dataset stacked = stack_with_label(orig, synth);
  const std::vector<std::string> preds =
      predictors.empty() ? all_predictors(orig.schema()) : predictors;

  PmseReport report;
  report.synthetic_share = static_cast<double>(synth.n_rows()) /
                           static_cast<double>(orig.n_rows() + synth.n_rows());
  report.pmse = pmse_of_labels(stacked, preds, model_params);
  report.standardized_ratio = std::numeric_limits<double>::quiet_NaN();
  report.null_mean = std::numeric_limits<double>::quiet_NaN();
  return report;
}

namespace {

double ratio_on_stacked(const Dataset& stacked,
                        const std::vector<std::string>& predictors,
                        const CartParams& params, int permutations,
                        std::uint64_t seed, double* null_mean_out) {
  const double observed = pmse_of_labels(stacked, predictors, params);
  const int label_col = stacked.schema().require(kLabelColumn);

  std::vector<double> nulls(static_cast<std::size_t>(permutations), 0.0);
  parallel_for(static_cast<std::size_t>(permutations), [&](std::size_t p) {
    Dataset permuted = stacked;
    std::vector<double> labels = stacked.column(label_col);
    Rng rng(derive_key(seed, "pmse-null", static_cast<std::uint64_t>(p)));
    for (std::size_t i = labels.size(); i > 1; --i) {
      const std::size_t j = rng.uniform_int(i);
      std::swap(labels[i - 1], labels[j]);
    }
    for (std::size_t r = 0; r < labels.size(); ++r)
      permuted.set_cell(r, label_col, labels[r]);
    nulls[p] = pmse_of_labels(permuted, predictors, params);
  });

  double null_mean = 0.0;
  for (double v : nulls) null_mean += v;
  null_mean /= static_cast<double>(permutations);
  if (null_mean_out) *null_mean_out = null_mean;
  if (null_mean == 0.0)
    throw DegenerateNullError(
        "standardized pMSE: permutation null mean is zero", observed);
  return observed / null_mean;
}

}  // namespace

double standardized_pmse_ratio(const Dataset& orig, const Dataset& synth,
                               const std::vector<std::string>& variables,
                               const CartParams& model_params,
                               int permutations, std::uint64_t seed) {
  if (permutations < 1)
    throw ValidationError("standardized pMSE: permutations must be >= 1");
  const Dataset stacked = stack_with_label(orig, synth);
  const std::vector<std::string> preds =
      variables.empty() ? all_predictors(orig.schema()) : variables;
  return ratio_on_stacked(stacked, preds, model_params, permutations, seed,
                          nullptr);
}

PmseReport pmse_report(const Dataset& orig, const Dataset& synth,
                       const CartParams& model_params, int permutations,
                       std::uint64_t seed, bool pairs) {
  if (permutations < 1)
    throw ValidationError("standardized pMSE: permutations must be >= 1");
  const Dataset stacked = stack_with_label(orig, synth);
  const std::vector<std::string> preds = all_predictors(orig.schema());

  PmseReport report;
  report.synthetic_share = static_cast<double>(synth.n_rows()) /
                           static_cast<double>(orig.n_rows() + synth.n_rows());
  report.pmse = pmse_of_labels(stacked, preds, model_params);
  report.permutations = permutations;
  report.standardized_ratio = ratio_on_stacked(
      stacked, preds, model_params, permutations, seed, &report.null_mean);

  if (pairs) {
    const auto d = preds.size();
    report.pair_variables = preds;
    report.pair_ratios.assign(
        d, std::vector<double>(d, std::numeric_limits<double>::quiet_NaN()));
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) jobs.emplace_back(i, j);
    // Outer loop stays serial: each ratio already parallelizes over its
    // permutation refits.
    for (const auto& [i, j] : jobs) {
      const std::vector<std::string> pair = {preds[i], preds[j]};
      double ratio;
      try {
        ratio = ratio_on_stacked(
            stacked, pair, model_params, permutations,
            derive_key(seed, "pmse-pair", static_cast<std::uint64_t>(i),
                       static_cast<std::uint64_t>(j)),
            nullptr);
      } catch (const DegenerateNullError&) {
        ratio = std::numeric_limits<double>::quiet_NaN();
      }
      report.pair_ratios[i][j] = ratio;
    }
  }
  return report;
}

void EstimateQuery::validate(const Schema& schema) const {
  const Variable& f = schema.var(schema.require(filter_variable));
  if (f.kind != VariableKind::kOrdinal && f.kind != VariableKind::kBinary)
    throw ValidationError("estimates: filter variable must be ordinal or binary");
  if (targets.empty()) throw ValidationError("estimates: no targets");
  for (const auto& t : targets) {
    if (schema.var(schema.require(t)).kind != VariableKind::kBinary)
      throw ValidationError("estimates: target " + t + " must be binary");
  }
}

EstimateTable replicate_estimates(
    const std::vector<std::pair<std::string, const Dataset*>>& datasets,
    const EstimateQuery& query) {
  if (datasets.empty()) throw ValidationError("estimates: no datasets");
  for (const auto& [name, data] : datasets) query.validate(data->schema());

  EstimateTable table;
  table.targets = query.targets;
  for (const auto& [name, data] : datasets) {
    table.dataset_names.push_back(name);
    const int fcol = data->schema().require(query.filter_variable);
    std::vector<std::size_t> subgroup;
    for (std::size_t r = 0; r < data->n_rows(); ++r) {
      const double v = data->cell(r, fcol);
      if (!is_missing(v) && v >= query.filter_min) subgroup.push_back(r);
    }
    table.subgroup_sizes.push_back(subgroup.size());
  }

  table.prevalence.assign(query.targets.size(), {});
  for (std::size_t t = 0; t < query.targets.size(); ++t) {
    for (const auto& [name, data] : datasets) {
      const int fcol = data->schema().require(query.filter_variable);
      const int tcol = data->schema().require(query.targets[t]);
      std::size_t observed = 0, positive = 0;
      for (std::size_t r = 0; r < data->n_rows(); ++r) {
        const double f = data->cell(r, fcol);
        if (is_missing(f) || f < query.filter_min) continue;
        const double v = data->cell(r, tcol);
        if (is_missing(v)) continue;
        ++observed;
        positive += v == 1.0;
      }
      table.prevalence[t].push_back(
          observed == 0
              ? std::optional<double>{}
              : std::optional<double>{static_cast<double>(positive) /
                                      static_cast<double>(observed)});
    }
  }
  return table;
}

namespace {

constexpr std::size_t kHistogramBins = 20;
constexpr const char* kMissingLabel = "MISSING";

std::string level_label(const Variable& var, double value) {
  if (is_missing(value)) return kMissingLabel;
  switch (var.kind) {
    case VariableKind::kNominal:
      return var.nominal_levels[static_cast<std::size_t>(value)];
    case VariableKind::kOrdinal:
    case VariableKind::kBinary:
      return std::to_string(static_cast<long long>(value));
    default:
      return format_double(value);
  }
}

}  // namespace

MarginalComparison compare_marginals(const Dataset& orig, const Dataset& synth) {
  if (!(orig.schema() == synth.schema()))
    throw ValidationError("compare_marginals: schemas differ");

  MarginalComparison cmp;
  for (int c = 0; c < orig.n_cols(); ++c) {
    const Variable& var = orig.schema().var(c);
    if (var.kind == VariableKind::kQuantitative) {
      QuantitativeMarginal q;
      q.variable = var.name;
      std::vector<double> ov, sv;
      for (double v : orig.column(c)) {
        if (is_missing(v)) ++q.orig_missing;
        else ov.push_back(v);
      }
      for (double v : synth.column(c)) {
        if (is_missing(v)) ++q.synth_missing;
        else sv.push_back(v);
      }

      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (double v : ov) { lo = std::min(lo, v); hi = std::max(hi, v); }
      for (double v : sv) { lo = std::min(lo, v); hi = std::max(hi, v); }
      if (!(hi > lo)) hi = lo + 1.0;

      const std::size_t bins = kHistogramBins;
      for (std::size_t b = 0; b <= bins; ++b)
        q.bin_edges.push_back(lo + (hi - lo) * static_cast<double>(b) /
                              static_cast<double>(bins));
      q.orig_counts.assign(bins, 0);
      q.synth_counts.assign(bins, 0);
      const auto bucket = [&](double v) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) *
                                          static_cast<double>(bins));
        return std::min(b, bins - 1);
      };
      for (double v : ov) ++q.orig_counts[bucket(v)];
      for (double v : sv) ++q.synth_counts[bucket(v)];
      q.ks = ks_two_sample(ov, sv);
      cmp.quantitative.push_back(std::move(q));
    } else {
      CategoricalMarginal cat;
      cat.variable = var.name;
      std::vector<double> levels;
      switch (var.kind) {
        case VariableKind::kBinary:
          levels = {0.0, 1.0};
          break;
        case VariableKind::kOrdinal:
          for (long long l : var.ordinal_levels)
            levels.push_back(static_cast<double>(l));
          break;
        default:
          for (std::size_t i = 0; i < var.nominal_levels.size(); ++i)
            levels.push_back(static_cast<double>(i));
      }
      if (var.missing_allowed) levels.push_back(missing_value());
      for (double l : levels) cat.labels.push_back(level_label(var, l));
      cat.orig_counts.assign(levels.size(), 0);
      cat.synth_counts.assign(levels.size(), 0);
      const auto tally = [&](const std::vector<double>& column,
                             std::vector<std::size_t>& counts) {
        for (double v : column) {
          for (std::size_t i = 0; i < levels.size(); ++i) {
            if (same_category(v, levels[i])) {
              ++counts[i];
              break;
            }
          }
        }
      };
      tally(orig.column(c), cat.orig_counts);
      tally(synth.column(c), cat.synth_counts);
      cmp.categorical.push_back(std::move(cat));
    }
  }
  return cmp;
}

void write_marginals_csv(const MarginalComparison& cmp, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << "variable,kind,bin,orig_count,orig_share,synth_count,synth_share\n";
    const auto share = [](std::size_t count, std::size_t total) {
      return total == 0 ? 0.0
                        : static_cast<double>(count) / static_cast<double>(total);
    };
    for (const auto& cat : cmp.categorical) {
      std::size_t to = 0, ts = 0;
      for (auto v : cat.orig_counts) to += v;
      for (auto v : cat.synth_counts) ts += v;
      for (std::size_t i = 0; i < cat.labels.size(); ++i) {
        out << cat.variable << ",categorical," << cat.labels[i] << ','
            << cat.orig_counts[i] << ',' << format_double(share(cat.orig_counts[i], to))
            << ',' << cat.synth_counts[i] << ','
            << format_double(share(cat.synth_counts[i], ts)) << '\n';
      }
    }
    for (const auto& q : cmp.quantitative) {
      std::size_t to = 0, ts = 0;
      for (auto v : q.orig_counts) to += v;
      for (auto v : q.synth_counts) ts += v;
      for (std::size_t i = 0; i < q.orig_counts.size(); ++i) {
        out << q.variable << ",quantitative,[" << format_double(q.bin_edges[i])
            << ';' << format_double(q.bin_edges[i + 1]) << "),"
            << q.orig_counts[i] << ',' << format_double(share(q.orig_counts[i], to))
            << ',' << q.synth_counts[i] << ','
            << format_double(share(q.synth_counts[i], ts)) << '\n';
      }
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename " + tmp + " to " + path);
}

}  // namespace synthguard
