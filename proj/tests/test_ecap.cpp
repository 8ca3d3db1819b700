#include <cmath>

#include "doctest.h"
#include "synthguard/ecap.hpp"
#include "synthguard/errors.hpp"
#include "synthguard/rng.hpp"
#include "synthguard/stats.hpp"
#include "test_util.hpp"

using namespace synthguard;

namespace {

PopulationModel normal_model(std::int64_t n, double mean, double sd) {
  PopulationModel m;
  m.population_size = n;
  m.distribution = std::make_shared<NormalDistribution>(mean, sd);
  return m;
}

PopulationModel uniform_model(std::int64_t n, double lo, double hi) {
  PopulationModel m;
  m.population_size = n;
  m.distribution = std::make_shared<UniformDistribution>(lo, hi);
  return m;
}

EcapQuery make_query(double x_a, int n, const PopulationModel& model,
                     double sigma, const NeighborEstimate& nb,
                     std::uint64_t seed, int samples = 100000) {
  EcapQuery q;
  q.x_a = x_a;
  q.sample_size = n;
  q.model = model;
  q.noise.sigma = sigma;
  q.neighbors = nb;
  q.mc.probability_samples = samples;
  q.mc.seed = seed;
  return q;
}

// Full attack simulation: draw n-element samples from the mixture, add
// noise, condition on a released value landing in I_1, and count how often
// x_a itself was sampled. Independent of the closed-form evaluation.
struct SimulationResult {
  double probability = 0.0;
  double stderr = 0.0;
  std::size_t conditioning_events = 0;
};

SimulationResult simulate_attack(const EcapQuery& q, std::size_t replicates,
                                 std::uint64_t seed) {
  Rng rng(derive_key(seed, "attack-sim"));
  const double big_n = static_cast<double>(q.model.population_size);
  const double i1_lo = (q.x_a + q.neighbors.below) / 2.0;
  const double i1_hi = (q.x_a + q.neighbors.above) / 2.0;
  std::size_t hits = 0, events = 0;
  for (std::size_t r = 0; r < replicates; ++r) {
    bool sampled_xa = false, event = false;
    for (int k = 0; k < q.sample_size; ++k) {
      double s;
      if (rng.uniform() < 1.0 / big_n) {
        s = q.x_a;
      } else {
        do {
          s = q.model.distribution->sample(rng);
        } while (s >= q.neighbors.below && s <= q.neighbors.above);
      }
      const double released = s + q.noise.sigma * rng.normal();
      sampled_xa |= s == q.x_a;
      event |= released >= i1_lo && released <= i1_hi;
    }
    if (event) {
      ++events;
      hits += sampled_xa;
    }
  }
  SimulationResult res;
  res.conditioning_events = events;
  if (events > 0) {
    res.probability = static_cast<double>(hits) / static_cast<double>(events);
    res.stderr = std::sqrt(
        std::max(res.probability * (1.0 - res.probability), 1e-12) /
        static_cast<double>(events));
  }
  return res;
}

}  // namespace

TEST_CASE("normal_cdf reference values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-5));
  CHECK(normal_cdf(-3.0) == doctest::Approx(0.0013499).epsilon(1e-3));
}

TEST_CASE("msd closed forms") {
  CHECK(msd(0.0, 10.0, 11) == 1.0);
  CHECK(msd(5.0, 5.0, 100) == 0.0);
  CHECK(msd(2.5, 7.5, 2) == 5.0);
  CHECK_THROWS_AS(msd(0.0, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(msd(1.0, 0.0, 5), ValidationError);
}

TEST_CASE("estimate_neighbors on Uniform(0,1) around the midpoint") {
  const PopulationModel model = uniform_model(1001, 0.0, 1.0);
  const NeighborEstimate nb = estimate_neighbors(0.5, model, 2000, 424242);
  // Expected spacing 1/1000 on each side.
  CHECK(std::fabs(nb.below - 0.499) <= 3.0 * nb.stderr_below + 1e-4);
  CHECK(std::fabs(nb.above - 0.501) <= 3.0 * nb.stderr_above + 1e-4);
  CHECK(nb.fallback_below == 0);
  CHECK(nb.fallback_above == 0);
}

TEST_CASE("estimate_neighbors: tail gaps exceed central gaps") {
  const PopulationModel model = normal_model(1500, 170.0, 12.0);
  const NeighborEstimate center = estimate_neighbors(170.0, model, 400, 7);
  const NeighborEstimate tail = estimate_neighbors(178.0, model, 400, 8);
  CHECK(tail.above - tail.below > center.above - center.below);
}

TEST_CASE("estimate_neighbors is deterministic given the seed") {
  const PopulationModel model = normal_model(200, 0.0, 1.0);
  const NeighborEstimate a = estimate_neighbors(0.5, model, 1, 99);
  const NeighborEstimate b = estimate_neighbors(0.5, model, 1, 99);
  CHECK(a.below == b.below);
  CHECK(a.above == b.above);
}

TEST_CASE("estimate_neighbors falls back to an MSD step beyond all draws") {
  // x_a far above the population: no draw lands above it.
  const PopulationModel model = uniform_model(50, 0.0, 1.0);
  const NeighborEstimate nb = estimate_neighbors(2.0, model, 20, 5);
  CHECK(nb.fallback_above == 20);
  CHECK(nb.fallback_below == 0);
  CHECK(nb.above > 2.0);
}

TEST_CASE("ecap with zero noise is exactly 1") {
  Rng rng(derive_key(1, "zero-noise"));
  const PopulationModel model = normal_model(1500, 170.0, 12.0);
  for (int i = 0; i < 10; ++i) {
    const double x_a = 170.0 + rng.uniform(-20.0, 20.0);
    const NeighborEstimate nb =
        estimate_neighbors(x_a, model, 50, derive_key(2, "nb", static_cast<std::uint64_t>(i)));
    const EcapValue v = ecap(make_query(x_a, 25, model, 0.0, nb, 3));
    CHECK(v.value == 1.0);
    CHECK(v.analytic);
  }
}

TEST_CASE("plateau constant of the worked configuration") {
  const double plateau = 1.0 - std::pow(1499.0 / 1500.0, 25.0);
  CHECK(plateau == doctest::Approx(0.0165).epsilon(0.01));
}

TEST_CASE("large noise drives the ECAP to the plateau") {
  const PopulationModel model = normal_model(1500, 170.0, 12.0);
  const NeighborEstimate nb = estimate_neighbors(178.0, model, 300, 11);
  const double gap = nb.above - nb.below;
  const double plateau = 1.0 - std::pow(1499.0 / 1500.0, 25.0);
  const EcapValue v =
      ecap(make_query(178.0, 25, model, 100.0 * gap, nb, 13, 400000));
  CHECK(std::fabs(v.value - plateau) <= 0.005 + 3.0 * v.stderr);
}

TEST_CASE("ecap decreases along an ascending sigma grid (within MC error)") {
  const PopulationModel model = normal_model(1500, 170.0, 12.0);
  McParams mc;
  mc.neighbor_replicates = 300;
  mc.probability_samples = 150000;
  mc.seed = 21;
  const NeighborEstimate nb = estimate_neighbors(178.0, model, 300, 22);
  const double gap = nb.above - nb.below;
  std::vector<double> grid;
  for (int i = 0; i < 12; ++i)
    grid.push_back(0.3 * gap * std::pow(30.0 / 0.3, i / 11.0));
  const EcapCurve curve = ecap_curve(178.0, model, 25, grid, mc);
  REQUIRE(curve.points.size() == 12);
  CHECK(curve.difference_quotients.size() == 11);
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const double se = std::sqrt(
        curve.points[i].ecap.stderr * curve.points[i].ecap.stderr +
        curve.points[i + 1].ecap.stderr * curve.points[i + 1].ecap.stderr);
    CHECK(curve.points[i].ecap.value - curve.points[i + 1].ecap.value >=
          -3.0 * se);
  }
}

TEST_CASE("single-point grid yields a single pair") {
  const PopulationModel model = normal_model(500, 0.0, 1.0);
  McParams mc;
  mc.neighbor_replicates = 50;
  mc.probability_samples = 20000;
  mc.seed = 5;
  const EcapCurve curve = ecap_curve(0.5, model, 10, {0.01}, mc);
  CHECK(curve.points.size() == 1);
  CHECK(curve.difference_quotients.empty());
}

TEST_CASE("Eq. 1 evaluation agrees with the full attack simulation") {
  const PopulationModel model = normal_model(100, 0.0, 1.0);
  const NeighborEstimate nb = estimate_neighbors(0.3, model, 500, 31);
  const double gap = nb.above - nb.below;
  const EcapQuery q = make_query(0.3, 5, model, 0.8 * gap, nb, 33, 300000);
  const EcapValue closed_form = ecap(q);
  const SimulationResult sim = simulate_attack(q, 400000, 35);
  REQUIRE(sim.conditioning_events > 1000);
  const double combined = std::sqrt(closed_form.stderr * closed_form.stderr +
                                    sim.stderr * sim.stderr);
  CHECK(std::fabs(closed_form.value - sim.probability) <= 3.0 * combined + 1e-3);
}

TEST_CASE("ecap reports indeterminate when MC cannot resolve the tail") {
  // Sigma so far beyond the population scale that no probability mass can
  // be resolved inside I_1: the denominator collapses and the evaluation
  // refuses to guess.
  const PopulationModel model = normal_model(1000, 0.0, 1.0);
  const NeighborEstimate nb = estimate_neighbors(0.0, model, 50, 41);
  try {
    ecap(make_query(0.0, 10, model, 1e18, nb, 42, 5000));
    FAIL("expected EcapIndeterminateError");
  } catch (const EcapIndeterminateError& e) {
    CHECK(e.p_outside_i1 >= 1.0 - 1e-9);
  }
}

TEST_CASE("ecap query validation") {
  const PopulationModel model = normal_model(100, 0.0, 1.0);
  NeighborEstimate nb;
  nb.below = 0.1;
  nb.above = 0.2;
  CHECK_THROWS_AS(ecap(make_query(0.5, 5, model, 0.1, nb, 1)), ValidationError);
  nb.below = -0.1;
  nb.above = 0.1;
  CHECK_THROWS_AS(ecap(make_query(0.0, 101, model, 0.1, nb, 1)), ValidationError);
}

TEST_CASE("calibrate_noise with a vacuous target picks the smallest sigma") {
  const PopulationModel model = normal_model(300, 0.0, 1.0);
  McParams mc;
  mc.neighbor_replicates = 50;
  mc.probability_samples = 5000;
  mc.seed = 51;
  const CalibrationResult cal =
      calibrate_noise({0.1, 0.4}, model, 10, 1.0, {0.01, 0.02, 0.05}, mc);
  CHECK(cal.noise.sigma == 0.01);
  CHECK(cal.table.size() == 2);
}

TEST_CASE("calibrate_noise reports the best sigma when the target is unreachable") {
  const PopulationModel model = normal_model(300, 0.0, 1.0);
  McParams mc;
  mc.neighbor_replicates = 50;
  mc.probability_samples = 5000;
  mc.seed = 52;
  // Tiny sigmas leave the ECAP at 1, far above the target.
  try {
    calibrate_noise({0.1}, model, 10, 1e-6, {1e-6, 2e-6}, mc);
    FAIL("expected CalibrationError");
  } catch (const CalibrationError& e) {
    CHECK(e.best_max_ecap > 0.5);
  }
}

TEST_CASE("calibrated sigma lands in the band where the curve crosses the target") {
  // Single released value at the Fig.-5-style operating point.
  const PopulationModel model = normal_model(1500, 170.0, 12.0);
  McParams mc;
  mc.neighbor_replicates = 300;
  mc.probability_samples = 150000;
  mc.seed = 61;
  std::vector<double> grid;
  for (int i = 0; i < 40; ++i)
    grid.push_back(0.005 * std::pow(1.0 / 0.005, i / 39.0));
  const CalibrationResult by_02 =
      calibrate_noise({178.0}, model, 25, 0.2, grid, mc);
  CHECK(by_02.noise.sigma >= 0.03);
  CHECK(by_02.noise.sigma <= 0.15);
  const CalibrationResult by_01 =
      calibrate_noise({178.0}, model, 25, 0.1, grid, mc);
  CHECK(by_01.noise.sigma >= by_02.noise.sigma);
  CHECK(by_01.binding_value == 178.0);
}

TEST_CASE("apply_noise") {
  const auto [train, control] = split_holdout(sgtest::fixture_data(), 199, 17);
  const int age = train.schema().require("AGE");

  SUBCASE("sigma 0 is the identity") {
    NoiseSpec zero;
    CHECK(apply_noise(train, "AGE", zero, 9) == train);
  }

  SUBCASE("non-target columns and missing cells stay bit-identical") {
    NoiseSpec spec;
    spec.sigma = 0.5;
    const Dataset noised = apply_noise(train, "N.SIBLINGS", spec, 10);
    const int sib = train.schema().require("N.SIBLINGS");
    for (int c = 0; c < train.n_cols(); ++c) {
      if (c == sib) continue;
      for (std::size_t r = 0; r < train.n_rows(); ++r) {
        const double a = train.cell(r, c), b = noised.cell(r, c);
        CHECK(((is_missing(a) && is_missing(b)) || a == b));
      }
    }
    for (std::size_t r = 0; r < train.n_rows(); ++r) {
      if (is_missing(train.cell(r, sib))) CHECK(is_missing(noised.cell(r, sib)));
    }
  }

  SUBCASE("column mean shifts by at most 4 sigma/sqrt(n) across 100 seeds") {
    NoiseSpec spec;
    spec.sigma = 0.1;
    double before = 0.0;
    for (double v : train.column(age)) before += v;
    before /= static_cast<double>(train.n_rows());
    const double bound =
        4.0 * spec.sigma / std::sqrt(static_cast<double>(train.n_rows()));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Dataset noised = apply_noise(train, "AGE", spec, seed);
      double after = 0.0;
      for (double v : noised.column(age)) after += v;
      after /= static_cast<double>(noised.n_rows());
      CHECK(std::fabs(after - before) <= bound);
    }
  }

  SUBCASE("non-quantitative variables are rejected") {
    NoiseSpec spec;
    spec.sigma = 0.1;
    CHECK_THROWS_AS(apply_noise(train, "SEVERITY", spec, 1), ValidationError);
  }
}
