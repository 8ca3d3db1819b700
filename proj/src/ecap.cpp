#include "synthguard/ecap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "synthguard/errors.hpp"
#include "synthguard/parallel.hpp"
#include "synthguard/stats.hpp"

namespace synthguard {

NormalDistribution::NormalDistribution(double mean, double sd)
    : mean_(mean), sd_(sd) {
  if (!(sd > 0.0)) throw ValidationError("normal distribution: sd must be > 0");
}

double NormalDistribution::sample(Rng& rng) const {
  return rng.normal(mean_, sd_);
}

double NormalDistribution::cdf(double x) const {
  return normal_cdf((x - mean_) / sd_);
}

std::string NormalDistribution::describe() const {
  return "normal(" + std::to_string(mean_) + ", " + std::to_string(sd_) + "^2)";
}

UniformDistribution::UniformDistribution(double lo, double hi)
    : lo_(lo), hi_(hi) {
  if (!(hi > lo)) throw ValidationError("uniform distribution: hi must exceed lo");
}

double UniformDistribution::sample(Rng& rng) const {
  return rng.uniform(lo_, hi_);
}

double UniformDistribution::cdf(double x) const {
  if (x <= lo_) return 0.0;
  if (x >= hi_) return 1.0;
  return (x - lo_) / (hi_ - lo_);
}

std::string UniformDistribution::describe() const {
  return "uniform(" + std::to_string(lo_) + ", " + std::to_string(hi_) + ")";
}

void PopulationModel::validate() const {
  if (population_size < 2)
    throw ValidationError("population model: N must be >= 2");
  if (!distribution)
    throw ValidationError("population model: no distribution");
}

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0)) throw ValidationError("noise spec: sigma must be >= 0");
}

double msd(double x_min, double x_max, std::int64_t population_size) {
  if (population_size < 2) throw ValidationError("msd: N must be >= 2");
  if (x_max < x_min) throw ValidationError("msd: x_max must be >= x_min");
  return (x_max - x_min) / static_cast<double>(population_size - 1);
}

NeighborEstimate estimate_neighbors(double x_a, const PopulationModel& model,
                                    int replicates, std::uint64_t seed) {
  model.validate();
  if (replicates < 1)
    throw ValidationError("estimate_neighbors: replicates must be >= 1");

  const std::int64_t draws = model.population_size - 1;
  std::vector<double> below(static_cast<std::size_t>(replicates));
  std::vector<double> above(static_cast<std::size_t>(replicates));
  std::vector<char> below_miss(static_cast<std::size_t>(replicates), 0);
  std::vector<char> above_miss(static_cast<std::size_t>(replicates), 0);

  parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t rep) {
    Rng rng(derive_key(seed, "neighbors", static_cast<std::uint64_t>(rep)));
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double sample_min = x_a, sample_max = x_a;
    for (std::int64_t k = 0; k < draws; ++k) {
      const double v = model.distribution->sample(rng);
      if (v < x_a && v > lo) lo = v;
      if (v > x_a && v < hi) hi = v;
      sample_min = std::min(sample_min, v);
      sample_max = std::max(sample_max, v);
    }
    // A side with no draw beyond x_a falls back to the replicate's own
    // MSD-sized step.
    const double gap = msd(sample_min, sample_max, model.population_size);
    if (!std::isfinite(lo)) {
      lo = x_a - gap;
      below_miss[rep] = 1;
    }
    if (!std::isfinite(hi)) {
      hi = x_a + gap;
      above_miss[rep] = 1;
    }
    below[rep] = lo;
    above[rep] = hi;
  });

  NeighborEstimate est;
  double sum_b = 0.0, sum_a = 0.0;
  for (std::size_t i = 0; i < below.size(); ++i) {
    sum_b += below[i];
    sum_a += above[i];
    est.fallback_below += below_miss[i];
    est.fallback_above += above_miss[i];
  }
  const double r = static_cast<double>(replicates);
  est.below = sum_b / r;
  est.above = sum_a / r;
  if (replicates > 1) {
    double ss_b = 0.0, ss_a = 0.0;
    for (std::size_t i = 0; i < below.size(); ++i) {
      ss_b += (below[i] - est.below) * (below[i] - est.below);
      ss_a += (above[i] - est.above) * (above[i] - est.above);
    }
    est.stderr_below = std::sqrt(ss_b / (r - 1.0) / r);
    est.stderr_above = std::sqrt(ss_a / (r - 1.0) / r);
  }
  return est;
}

void EcapQuery::validate() const {
  model.validate();
  noise.validate();
  if (!(neighbors.below < x_a && x_a < neighbors.above))
    throw ValidationError("ecap: need x_{a-1} < x_a < x_{a+1}");
  if (sample_size < 1) throw ValidationError("ecap: n must be >= 1");
  if (static_cast<std::int64_t>(sample_size) > model.population_size)
    throw ValidationError("ecap: n must not exceed N");
}

namespace {

constexpr int kMcChunk = 8192;

struct Interval {
  double lo, hi;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// P(D' in [lo, hi]) where D' is D restricted outside [below, above];
// analytic through D's CDF.
double restricted_interval_mass(const Distribution& d, double lo, double hi,
                                double below, double above) {
  if (hi <= lo) return 0.0;
  const double excluded = d.cdf(above) - d.cdf(below);
  const double total = d.cdf(hi) - d.cdf(lo);
  const double cut_lo = std::max(lo, below);
  const double cut_hi = std::min(hi, above);
  const double overlap = cut_hi > cut_lo ? d.cdf(cut_hi) - d.cdf(cut_lo) : 0.0;
  const double denom = 1.0 - excluded;
  if (denom <= 0.0) return 0.0;
  return std::max(0.0, (total - overlap) / denom);
}

}  // namespace

EcapValue ecap(const EcapQuery& query) {
  query.validate();
  const double n = static_cast<double>(query.sample_size);
  const double big_n = static_cast<double>(query.model.population_size);
  const double a_ratio = (big_n - 1.0) / big_n;
  const Interval i1{(query.x_a + query.neighbors.below) / 2.0,
                    (query.x_a + query.neighbors.above) / 2.0};
  const Interval i2{(query.neighbors.below - query.x_a) / 2.0,
                    (query.neighbors.above - query.x_a) / 2.0};
  const double sigma = query.noise.sigma;

  EcapValue out;
  if (sigma == 0.0) {
    // B = 0 lies in I_2, and S'+B lands in I_1 exactly when S' = x_a: the
    // numerator collapses and the ECAP is exactly 1.
    out.value = 1.0;
    out.stderr = 0.0;
    out.p_outside_i1 = a_ratio;
    out.p_noise_outside_i2 = 0.0;
    out.analytic = true;
    return out;
  }

  out.p_noise_outside_i2 =
      1.0 - (normal_cdf(i2.hi / sigma) - normal_cdf(i2.lo / sigma));

  // P(S' + B in I_1) for the mixture S' = {x_a w.p. 1/N, else D'}. The x_a
  // branch is P(B in I_2), analytic. The D' branch is Monte Carlo over the
  // noise alone: per draw b, P(D' in I_1 - b) comes from D's CDF, so the
  // mixture and D' never need to be sampled and the estimate stays sharp
  // even when the target probability is of order 1/N.
  const int samples = query.mc.probability_samples;
  if (samples < 1) throw ValidationError("ecap: probability_samples must be >= 1");
  const int n_chunks = (samples + kMcChunk - 1) / kMcChunk;
  std::vector<double> chunk_sum(static_cast<std::size_t>(n_chunks), 0.0);
  std::vector<double> chunk_sumsq(static_cast<std::size_t>(n_chunks), 0.0);
  parallel_for(static_cast<std::size_t>(n_chunks), [&](std::size_t chunk) {
    Rng rng(derive_key(query.mc.seed, "ecap-mixture",
                       static_cast<std::uint64_t>(chunk)));
    const int lo = static_cast<int>(chunk) * kMcChunk;
    const int hi = std::min(samples, lo + kMcChunk);
    double sum = 0.0, sumsq = 0.0;
    for (int s = lo; s < hi; ++s) {
      const double b = sigma * rng.normal();
      const double mass = restricted_interval_mass(
          *query.model.distribution, i1.lo - b, i1.hi - b,
          query.neighbors.below, query.neighbors.above);
      sum += mass;
      sumsq += mass * mass;
    }
    chunk_sum[chunk] = sum;
    chunk_sumsq[chunk] = sumsq;
  });
  double sum_h = 0.0, sumsq_h = 0.0;
  for (std::size_t c = 0; c < chunk_sum.size(); ++c) {
    sum_h += chunk_sum[c];
    sumsq_h += chunk_sumsq[c];
  }
  const double m = static_cast<double>(samples);
  const double mean_h = sum_h / m;
  const double var_h = std::max(0.0, (sumsq_h - sum_h * sum_h / m) / std::max(1.0, m - 1.0));
  const double q2_in = 1.0 - out.p_noise_outside_i2;  // P(B in I_2)
  const double p_in = q2_in / big_n + (1.0 - 1.0 / big_n) * mean_h;
  const double p1 = 1.0 - p_in;
  const double se1 = (1.0 - 1.0 / big_n) * std::sqrt(var_h / m);

  const auto evaluate = [&](double p) {
    p = std::clamp(p, 0.0, 1.0);
    const double denom = 1.0 - std::pow(p, n);
    if (denom < 1e-15) {
      throw EcapIndeterminateError(
          "ecap: denominator 1 - P(outside I1)^n below 1e-15 (P(outside I1)=" +
              std::to_string(p) + ", P(B outside I2)=" +
              std::to_string(out.p_noise_outside_i2) + ")",
          p, out.p_noise_outside_i2);
    }
    const double r = std::clamp(p - out.p_noise_outside_i2 / big_n, 0.0, 1.0);
    const double value =
        1.0 - (std::pow(a_ratio, n) - std::pow(r, n)) / denom;
    return std::clamp(value, 0.0, 1.0);
  };

  out.p_outside_i1 = p1;
  out.value = evaluate(p1);
  // Delta-method style spread from the Monte-Carlo uncertainty in p1.
  double hi_val = out.value, lo_val = out.value;
  try {
    hi_val = evaluate(p1 - se1);
  } catch (const EcapIndeterminateError&) {
  }
  try {
    lo_val = evaluate(p1 + se1);
  } catch (const EcapIndeterminateError&) {
  }
  out.stderr = std::fabs(hi_val - lo_val) / 2.0;
  return out;
}

EcapCurve ecap_curve(double x_a, const PopulationModel& model, int sample_size,
                     const std::vector<double>& sigma_grid,
                     const McParams& mc) {
  if (sigma_grid.empty()) throw ValidationError("ecap_curve: empty grid");
  for (std::size_t i = 1; i < sigma_grid.size(); ++i) {
    if (!(sigma_grid[i] > sigma_grid[i - 1]))
      throw ValidationError("ecap_curve: grid must be strictly ascending");
  }

  EcapCurve curve;
  curve.neighbors = estimate_neighbors(x_a, model, mc.neighbor_replicates,
                                       derive_key(mc.seed, "curve-neighbors"));
  curve.points.resize(sigma_grid.size());
  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    EcapQuery q;
    q.x_a = x_a;
    q.sample_size = sample_size;
    q.model = model;
    q.noise.sigma = sigma_grid[i];
    q.neighbors = curve.neighbors;
    q.mc = mc;
    q.mc.seed = derive_key(mc.seed, "curve-point", static_cast<std::uint64_t>(i));
    curve.points[i] = {sigma_grid[i], ecap(q)};
  }
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    curve.difference_quotients.push_back(
        (curve.points[i + 1].ecap.value - curve.points[i].ecap.value) /
        (curve.points[i + 1].sigma - curve.points[i].sigma));
  }
  return curve;
}

namespace {

std::vector<double> geometric_grid(double lo, double hi, int points) {
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(points));
  const double ratio = std::log(hi / lo) / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i)
    grid.push_back(lo * std::exp(ratio * static_cast<double>(i)));
  return grid;
}

}  // namespace

CalibrationResult calibrate_noise(const std::vector<double>& values,
                                  const PopulationModel& model,
                                  int sample_size, double target_ecap,
                                  std::vector<double> sigma_grid,
                                  const McParams& mc,
                                  int default_grid_points) {
  if (default_grid_points < 2)
    throw ValidationError("calibrate_noise: need at least 2 grid points");
  if (values.empty()) throw ValidationError("calibrate_noise: no values");
  if (!(target_ecap > 0.0 && target_ecap < 1.0) && target_ecap != 1.0)
    throw ValidationError("calibrate_noise: target must lie in (0, 1]");

  std::vector<double> distinct(values);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  // Per-value neighbor estimates (shared across the whole grid).
  std::vector<NeighborEstimate> neighbors(distinct.size());
  parallel_for(distinct.size(), [&](std::size_t v) {
    neighbors[v] = estimate_neighbors(
        distinct[v], model, mc.neighbor_replicates,
        derive_key(mc.seed, "calibrate-neighbors", static_cast<std::uint64_t>(v)));
  });

  if (sigma_grid.empty()) {
    double min_gap = std::numeric_limits<double>::infinity();
    double max_gap = 0.0;
    for (const auto& nb : neighbors) {
      const double gap = nb.above - nb.below;
      min_gap = std::min(min_gap, gap);
      max_gap = std::max(max_gap, gap);
    }
    if (!(min_gap > 0.0))
      throw ValidationError("calibrate_noise: degenerate neighbor gaps");
    sigma_grid = geometric_grid(min_gap / 100.0, 10.0 * max_gap, default_grid_points);
  }
  for (std::size_t i = 1; i < sigma_grid.size(); ++i) {
    if (!(sigma_grid[i] > sigma_grid[i - 1]))
      throw ValidationError("calibrate_noise: grid must be strictly ascending");
  }

  // Worst-case ECAP per grid sigma; evaluations are independent tasks.
  // Points the Monte Carlo cannot resolve (sigma absurdly large for the
  // population scale) become NaN and never qualify for selection.
  const std::size_t n_grid = sigma_grid.size();
  std::vector<double> per_value_ecap(n_grid * distinct.size(), 0.0);
  parallel_for(n_grid * distinct.size(), [&](std::size_t task) {
    const std::size_t g = task / distinct.size();
    const std::size_t v = task % distinct.size();
    EcapQuery q;
    q.x_a = distinct[v];
    q.sample_size = sample_size;
    q.model = model;
    q.noise.sigma = sigma_grid[g];
    q.neighbors = neighbors[v];
    q.mc = mc;
    q.mc.seed = derive_key(mc.seed, "calibrate-point",
                           static_cast<std::uint64_t>(g),
                           static_cast<std::uint64_t>(v));
    try {
      per_value_ecap[task] = ecap(q).value;
    } catch (const EcapIndeterminateError&) {
      per_value_ecap[task] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  CalibrationResult result;
  result.target = target_ecap;
  result.grid = sigma_grid;
  result.max_ecap.resize(n_grid);
  std::vector<std::size_t> argmax(n_grid, 0);
  for (std::size_t g = 0; g < n_grid; ++g) {
    double worst = -1.0;
    bool unresolved = false;
    for (std::size_t v = 0; v < distinct.size(); ++v) {
      const double e = per_value_ecap[g * distinct.size() + v];
      unresolved |= std::isnan(e);
      if (e > worst) {
        worst = e;
        argmax[g] = v;
      }
    }
    result.max_ecap[g] =
        unresolved ? std::numeric_limits<double>::quiet_NaN() : worst;
  }
  for (std::size_t g = 0; g + 1 < n_grid; ++g) {
    result.difference_quotients.push_back(
        (result.max_ecap[g + 1] - result.max_ecap[g]) /
        (sigma_grid[g + 1] - sigma_grid[g]));
  }

  std::size_t selected = n_grid;
  for (std::size_t g = 0; g < n_grid; ++g) {
    if (result.max_ecap[g] <= target_ecap) {
      selected = g;
      break;
    }
  }
  if (selected == n_grid) {
    std::size_t best = 0;
    for (std::size_t g = 1; g < n_grid; ++g)
      if (result.max_ecap[g] < result.max_ecap[best]) best = g;
    throw CalibrationError(
        "calibrate_noise: no grid sigma reaches target " +
            std::to_string(target_ecap) + "; best max ECAP " +
            std::to_string(result.max_ecap[best]) + " at sigma " +
            std::to_string(sigma_grid[best]),
        sigma_grid[best], result.max_ecap[best]);
  }

  result.noise.sigma = sigma_grid[selected];
  result.binding_value = distinct[argmax[selected]];
  for (std::size_t v = 0; v < distinct.size(); ++v) {
    CalibrationEntry entry;
    entry.value = distinct[v];
    entry.neighbors = neighbors[v];
    entry.ecap_at_selected = per_value_ecap[selected * distinct.size() + v];
    result.table.push_back(std::move(entry));
  }

  // Difference-quotient reading of the curve: past the selected sigma, stop
  // where the marginal ECAP reduction per unit sigma has fallen under 10%
  // of the steepest drop.
  double steepest = 0.0;
  for (double q : result.difference_quotients) {
    if (!std::isnan(q)) steepest = std::max(steepest, std::fabs(q));
  }
  result.recommended_sigma = result.noise.sigma;
  for (std::size_t g = selected; g + 1 < n_grid; ++g) {
    const double q = result.difference_quotients[g];
    if (std::isnan(q) || std::fabs(q) < 0.1 * steepest) {
      result.recommended_sigma = sigma_grid[g];
      break;
    }
    result.recommended_sigma = sigma_grid[g + 1];
  }
  return result;
}

Dataset apply_noise(const Dataset& data, const std::string& variable,
                    const NoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int col = data.schema().require(variable);
  if (data.schema().var(col).kind != VariableKind::kQuantitative)
    throw ValidationError("apply_noise: " + variable + " is not quantitative");

  Dataset out = data;
  if (spec.sigma == 0.0) return out;
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    const double v = data.cell(r, col);
    if (is_missing(v)) continue;
    Rng rng(derive_key(seed, "noise", static_cast<std::uint64_t>(r)));
    out.set_cell(r, col, v + spec.sigma * rng.normal());
  }
  return out;
}

}  // namespace synthguard
