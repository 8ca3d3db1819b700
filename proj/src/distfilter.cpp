#include "synthguard/distfilter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "synthguard/errors.hpp"
#include "synthguard/parallel.hpp"

namespace synthguard {

namespace {

constexpr double kRcondThreshold = 1e-8;
constexpr double kInverseResidualTolerance = 1e-8;

double encode_cell(const Variable& var, double cell) {
  if (is_missing(cell)) return missing_value();
  switch (var.kind) {
    case VariableKind::kQuantitative:
      return cell;
    case VariableKind::kOrdinal:
      return static_cast<double>(var.ordinal_rank(cell));
    case VariableKind::kBinary:
      return cell;
    case VariableKind::kNominal:
      throw ValidationError("nominal variable " + var.name +
                            " cannot enter distances without dichotomization");
  }
  return missing_value();
}

std::vector<CorrelationDiagnostic> top_correlated_pairs(
    const Eigen::MatrixXd& cov, const std::vector<std::string>& names) {
  std::vector<CorrelationDiagnostic> all;
  const auto d = static_cast<int>(names.size());
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double denom = std::sqrt(cov(i, i) * cov(j, j));
      CorrelationDiagnostic c;
      c.a = names[static_cast<std::size_t>(i)];
      c.b = names[static_cast<std::size_t>(j)];
      c.correlation = denom > 0.0 ? cov(i, j) / denom : 0.0;
      all.push_back(std::move(c));
    }
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return std::fabs(x.correlation) > std::fabs(y.correlation);
  });
  if (all.size() > 5) all.resize(5);
  return all;
}

}  // namespace

void DistanceSpec::validate(const Schema& schema) const {
  if (variables.empty())
    throw ValidationError("distance spec: no variables selected");
  for (const auto& name : variables) {
    const Variable& var = schema.var(schema.require(name));
    if (var.kind == VariableKind::kNominal)
      throw ValidationError("distance spec: nominal variable " + name +
                            " must be dichotomized first");
    if (metric == DistanceMetric::kJaccard &&
        var.kind != VariableKind::kBinary)
      throw ValidationError("distance spec: Jaccard requires binary variables, "
                            "got " + name);
  }
}

CovarianceModel fit_covariance(const Dataset& orig, const DistanceSpec& spec) {
  spec.validate(orig.schema());
  const auto d = static_cast<int>(spec.variables.size());
  const auto n = static_cast<Eigen::Index>(orig.n_rows());
  if (n < 2)
    throw ValidationError("fit_covariance: need at least 2 rows");

  Eigen::MatrixXd x(n, d);
  for (int j = 0; j < d; ++j) {
    const int col = orig.schema().require(spec.variables[static_cast<std::size_t>(j)]);
    const Variable& var = orig.schema().var(col);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < n; ++r) {
      const double v = encode_cell(var, orig.cell(static_cast<std::size_t>(r), col));
      x(r, j) = v;
      if (!is_missing(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!std::isfinite(lo))
      throw ValidationError("fit_covariance: variable " +
                            spec.variables[static_cast<std::size_t>(j)] +
                            " has no observed values");
    // Worst-case fill, generalized from the pairwise rule: successive
    // missing entries alternate between the observed max and min.
    int occurrence = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (is_missing(x(r, j))) x(r, j) = (occurrence++ % 2 == 0) ? hi : lo;
    }
  }

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);

  CovarianceModel model;
  model.variables = spec.variables;
  model.covariance = cov;
  model.top_correlations = top_correlated_pairs(cov, spec.variables);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double lambda_max = ev.maxCoeff();
  const double lambda_min = ev.minCoeff();
  model.determinant = ev.prod();
  model.rcond = lambda_max > 0.0 ? lambda_min / lambda_max : 0.0;

  const auto fail = [&](const std::string& why) {
    std::string msg = "covariance matrix is near-singular (" + why +
                      "; determinant " + std::to_string(model.determinant) +
                      ", rcond " + std::to_string(model.rcond) +
                      "); most correlated pairs:";
    for (const auto& p : model.top_correlations)
      msg += " " + p.a + "~" + p.b + "=" + std::to_string(p.correlation);
    throw NearSingularError(msg, model.determinant, model.rcond,
                            model.top_correlations);
  };
  if (!(model.rcond >= kRcondThreshold)) fail("reciprocal condition number below 1e-8");

  model.inverse = cov.llt().solve(
      Eigen::MatrixXd::Identity(d, d));
  const double residual =
      (cov * model.inverse - Eigen::MatrixXd::Identity(d, d))
          .cwiseAbs()
          .maxCoeff();
  if (residual > kInverseResidualTolerance) fail("inverse residual above 1e-8");
  return model;
}

DistanceModel fit_distance_model(const Dataset& orig, const DistanceSpec& spec) {
  spec.validate(orig.schema());
  DistanceModel model;
  model.spec = spec;
  for (const auto& name : spec.variables) {
    const int col = orig.schema().require(name);
    const Variable& var = orig.schema().var(col);
    model.columns.push_back(col);
    VariableRange range;
    range.min = std::numeric_limits<double>::infinity();
    range.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < orig.n_rows(); ++r) {
      const double v = encode_cell(var, orig.cell(r, col));
      if (is_missing(v)) continue;
      range.min = std::min(range.min, v);
      range.max = std::max(range.max, v);
      sum += v;
      ++count;
    }
    if (count == 0)
      throw ValidationError("distance model: variable " + name +
                            " has no observed values");
    range.mean = sum / static_cast<double>(count);
    model.ranges.push_back(range);
  }
  if (spec.metric == DistanceMetric::kMahalanobis)
    model.covariance = fit_covariance(orig, spec);
  return model;
}

std::vector<double> encode_row(const Dataset& data, std::size_t row,
                               const DistanceModel& model) {
  std::vector<double> out(model.columns.size());
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    const Variable& var = data.schema().var(model.columns[j]);
    out[j] = encode_cell(var, data.cell(row, model.columns[j]));
  }
  return out;
}

double distance(std::span<const double> a, std::span<const double> b,
                const DistanceModel& model) {
  const std::size_t d = model.columns.size();
  if (model.spec.metric == DistanceMetric::kJaccard) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const bool aj = a[j] == 1.0;
      const bool bj = b[j] == 1.0;
      inter += aj && bj;
      uni += aj || bj;
    }
    return uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
  }
  const Eigen::MatrixXd& inv = model.covariance.inverse;
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double di = a[i] - b[i];
    for (std::size_t j = 0; j < d; ++j)
      quad += di * (a[j] - b[j]) * inv(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(j));
  }
  return std::sqrt(std::max(quad, 0.0));
}

void worst_case_fill(PairKind kind, std::span<double> a, std::span<double> b,
                     const DistanceModel& model) {
  for (std::size_t j = 0; j < model.ranges.size(); ++j) {
    const bool ma = is_missing(a[j]);
    const bool mb = is_missing(b[j]);
    if (!ma && !mb) continue;
    const VariableRange& range = model.ranges[j];
    if (kind == PairKind::kOrigOrig) {
      if (ma && mb) {
        a[j] = range.max;
        b[j] = range.min;
      } else {
        const double observed = ma ? b[j] : a[j];
        const double fill = (observed - range.min >= range.max - observed)
                                ? range.min
                                : range.max;
        (ma ? a[j] : b[j]) = fill;
      }
    } else {
      if (ma && mb) {
        a[j] = range.mean;
        b[j] = range.mean;
      } else {
        const double observed = ma ? b[j] : a[j];
        (ma ? a[j] : b[j]) = observed;
      }
    }
  }
}

namespace {

bool has_missing(std::span<const double> v) {
  for (double x : v)
    if (is_missing(x)) return true;
  return false;
}

double pair_distance(PairKind kind, const std::vector<double>& a,
                     const std::vector<double>& b, bool a_missing,
                     bool b_missing, const DistanceModel& model) {
  if (!a_missing && !b_missing) return distance(a, b, model);
  std::vector<double> fa = a, fb = b;
  worst_case_fill(kind, fa, fb, model);
  return distance(fa, fb, model);
}

}  // namespace

FilterOutcome filter_rows(const Dataset& orig, const Dataset& synth,
                          const DistanceModel& model) {
  const std::size_t n_orig = orig.n_rows();
  const std::size_t n_synth = synth.n_rows();
  if (n_orig < 2)
    throw ValidationError("filter_rows: need at least 2 original rows");

  std::vector<std::vector<double>> orig_rows(n_orig), synth_rows(n_synth);
  std::vector<char> orig_miss(n_orig), synth_miss(n_synth);
  for (std::size_t i = 0; i < n_orig; ++i) {
    orig_rows[i] = encode_row(orig, i, model);
    orig_miss[i] = has_missing(orig_rows[i]);
  }
  for (std::size_t i = 0; i < n_synth; ++i) {
    synth_rows[i] = encode_row(synth, i, model);
    synth_miss[i] = has_missing(synth_rows[i]);
  }

  // Distance from every original row to its nearest original neighbor.
  std::vector<double> nearest_orig(n_orig);
  parallel_for(n_orig, [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n_orig; ++j) {
      if (j == i) continue;
      best = std::min(best, pair_distance(PairKind::kOrigOrig, orig_rows[i],
                                          orig_rows[j], orig_miss[i],
                                          orig_miss[j], model));
    }
    nearest_orig[i] = best;
  });

  std::vector<char> kept(n_synth, 1);
  parallel_for(n_synth, [&](std::size_t s) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t closest = 0;
    for (std::size_t j = 0; j < n_orig; ++j) {
      const double dist = pair_distance(PairKind::kSynthOrig, synth_rows[s],
                                        orig_rows[j], synth_miss[s],
                                        orig_miss[j], model);
      if (dist < best) {  // strict: ties keep the lowest original index
        best = dist;
        closest = j;
      }
    }
    kept[s] = !(best < nearest_orig[closest]);
  });

  FilterOutcome out{Dataset(synth.schema(), 0), Dataset(synth.schema(), 0),
                    kept};
  for (std::size_t s = 0; s < n_synth; ++s)
    (kept[s] ? out.retained : out.removed).append_row(synth.row(s));
  return out;
}

Dataset filtered_synthesize(const Dataset& orig,
                            const std::vector<std::string>& order,
                            const CartParams& cart_params,
                            const DistanceSpec& spec, std::size_t target,
                            std::size_t max_rounds, FilterReport* report) {
  if (target < 1) throw ValidationError("filtered_synthesize: target must be >= 1");
  if (max_rounds < 1)
    throw ValidationError("filtered_synthesize: max_rounds must be >= 1");

  const DistanceModel model = fit_distance_model(orig, spec);
  Synthesizer synthesizer(orig, order, cart_params);

  FilterReport local;
  FilterReport& rep = report ? *report : local;
  rep = FilterReport{};
  rep.target = target;
  if (spec.metric == DistanceMetric::kMahalanobis) {
    rep.covariance_determinant = model.covariance.determinant;
    rep.covariance_rcond = model.covariance.rcond;
    rep.top_correlations = model.covariance.top_correlations;
  }

  Dataset accumulated(orig.schema(), 0);
  std::uint64_t row_offset = 0;
  std::size_t accepted = 0;
  for (std::size_t round = 0; round < max_rounds && accepted < target; ++round) {
    const std::size_t m = target;
    const Dataset batch = synthesizer.generate(m, row_offset);
    row_offset += m;
    const FilterOutcome outcome = filter_rows(orig, batch, model);

    FilterRound r;
    r.generated = m;
    r.retained = outcome.retained.n_rows();
    r.acceptance = static_cast<double>(r.retained) / static_cast<double>(m);
    rep.rounds.push_back(r);

    for (std::size_t i = 0; i < outcome.retained.n_rows() && accepted < target;
         ++i) {
      accumulated.append_row(outcome.retained.row(i));
      ++accepted;
    }
  }

  if (accepted < target) {
    std::vector<double> rates;
    for (const auto& r : rep.rounds) rates.push_back(r.acceptance);
    std::string msg = "filtered_synthesize: only " + std::to_string(accepted) +
                      " of " + std::to_string(target) + " rows retained after " +
                      std::to_string(rep.rounds.size()) + " rounds (acceptance";
    for (double a : rates) msg += " " + std::to_string(a);
    msg += ")";
    throw TargetNotReachedError(msg, target, accepted, std::move(rates));
  }
  rep.reached = true;
  return accumulated;
}

}  // namespace synthguard
