#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "synthguard/dataset.hpp"
#include "synthguard/rng.hpp"

namespace synthguard {

// Continuous population distribution: a sampler plus its CDF.
class Distribution {
 public:
  virtual ~Distribution() = default;
  virtual double sample(Rng& rng) const = 0;
  virtual double cdf(double x) const = 0;
  virtual std::string describe() const = 0;
};

class NormalDistribution final : public Distribution {
 public:
  NormalDistribution(double mean, double sd);
  double sample(Rng& rng) const override;
  double cdf(double x) const override;
  std::string describe() const override;
  double mean() const { return mean_; }
  double sd() const { return sd_; }

 private:
  double mean_, sd_;
};

class UniformDistribution final : public Distribution {
 public:
  UniformDistribution(double lo, double hi);
  double sample(Rng& rng) const override;
  double cdf(double x) const override;
  std::string describe() const override;

 private:
  double lo_, hi_;
};

struct PopulationModel {
  std::int64_t population_size = 0;  // N
  std::shared_ptr<const Distribution> distribution;  // D

  void validate() const;
};

// Zero-mean normal noise law.
struct NoiseSpec {
  double sigma = 0.0;

  void validate() const;
};

struct McParams {
  int neighbor_replicates = 200;
  int probability_samples = 100000;
  std::uint64_t seed = 0;
};

// Mean successive difference between sorted population values when the
// extremes are known: (x_max - x_min) / (N - 1).
double msd(double x_min, double x_max, std::int64_t population_size);

struct NeighborEstimate {
  double below = 0.0;  // x_{a-1}
  double above = 0.0;  // x_{a+1}
  double stderr_below = 0.0;
  double stderr_above = 0.0;
  // Replicates where no draw landed on that side of x_a; those replicates
  // fall back to an MSD-extrapolated gap.
  int fallback_below = 0;
  int fallback_above = 0;
};

// Monte-Carlo neighbor estimation: per replicate, draw N-1 population
// values and record the closest one on each side of x_a.
NeighborEstimate estimate_neighbors(double x_a, const PopulationModel& model,
                                    int replicates, std::uint64_t seed);

struct EcapQuery {
  double x_a = 0.0;
  int sample_size = 0;  // n
  PopulationModel model;
  NoiseSpec noise;
  NeighborEstimate neighbors;
  McParams mc;

  void validate() const;
};

struct EcapValue {
  double value = 0.0;
  double stderr = 0.0;
  double p_outside_i1 = 0.0;       // P(S'_1 + B_1 not in I_1)
  double p_noise_outside_i2 = 0.0; // P(B_1 not in I_2), analytic
  bool analytic = false;           // sigma = 0 path
};

// Correct-attribution probability that a released value in
// I_1 = [(x_a+x_{a-1})/2, (x_a+x_{a+1})/2] is explained by x_a itself:
//   1 - [((N-1)/N)^n - (P(S'+B not in I_1) - P(B not in I_2)/N)^n]
//       / [1 - P(S'+B not in I_1)^n]
// P(B not in I_2) is analytic; P(S'+B not in I_1) is Monte Carlo over the
// mixture (x_a with probability 1/N, else D restricted outside
// [x_{a-1}, x_{a+1}], sampled by rejection). sigma = 0 short-circuits to an
// exact analytic evaluation. Result clamped to [0, 1]. Throws
// EcapIndeterminateError when the denominator falls below 1e-15.
EcapValue ecap(const EcapQuery& query);

struct EcapCurvePoint {
  double sigma = 0.0;
  EcapValue ecap;
};

struct EcapCurve {
  std::vector<EcapCurvePoint> points;
  // (ecap_{i+1} - ecap_i) / (sigma_{i+1} - sigma_i)
  std::vector<double> difference_quotients;
  NeighborEstimate neighbors;
};

// One ECAP evaluation per ascending grid sigma, sharing a single neighbor
// estimate.
EcapCurve ecap_curve(double x_a, const PopulationModel& model, int sample_size,
                     const std::vector<double>& sigma_grid,
                     const McParams& mc);

struct CalibrationEntry {
  double value = 0.0;
  NeighborEstimate neighbors;
  double ecap_at_selected = 0.0;
};

struct CalibrationResult {
  NoiseSpec noise;       // smallest grid sigma meeting the target
  double target = 0.0;
  double binding_value = 0.0;  // value with the worst ECAP at the selection
  std::vector<CalibrationEntry> table;
  std::vector<double> grid;
  std::vector<double> max_ecap;  // worst-case ECAP per grid sigma
  std::vector<double> difference_quotients;
  // Smallest sigma at/after the selection where the worst-case curve has
  // flattened (quotient under 10% of the steepest observed one).
  double recommended_sigma = 0.0;
};

// Smallest grid sigma whose maximum ECAP over all distinct values is at or
// below the target. An empty grid defaults to `default_grid_points`
// geometric points spanning [min_gap/100, 10 * max_gap] over the values'
// estimated neighbor gaps. Throws CalibrationError (carrying the best
// achieved sigma) when no grid point reaches the target.
CalibrationResult calibrate_noise(const std::vector<double>& values,
                                  const PopulationModel& model,
                                  int sample_size, double target_ecap,
                                  std::vector<double> sigma_grid,
                                  const McParams& mc,
                                  int default_grid_points = 50);

// Adds an independent Normal(0, sigma^2) draw to every non-missing cell of
// a quantitative variable; other columns and missing cells are untouched.
Dataset apply_noise(const Dataset& data, const std::string& variable,
                    const NoiseSpec& spec, std::uint64_t seed);

}  // namespace synthguard
