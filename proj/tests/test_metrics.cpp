#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "synthguard/errors.hpp"
#include "synthguard/metrics.hpp"
#include "synthguard/rng.hpp"
#include "test_util.hpp"

using namespace synthguard;

namespace {

Schema cat_schema() {
  Variable k1, k2, k3, t;
  k1.name = "K1";
  k1.kind = VariableKind::kBinary;
  k2.name = "K2";
  k2.kind = VariableKind::kBinary;
  k3.name = "K3";
  k3.kind = VariableKind::kNominal;
  k3.nominal_levels = {"a", "b", "c", "d"};
  t.name = "T";
  t.kind = VariableKind::kBinary;
  return Schema({k1, k2, k3, t});
}

Dataset random_cat_data(std::uint64_t seed, std::size_t rows) {
  Dataset d(cat_schema(), 0);
  Rng rng(derive_key(seed, "catgen"));
  for (std::size_t r = 0; r < rows; ++r) {
    d.append_row({static_cast<double>(rng.uniform_int(2)),
                  static_cast<double>(rng.uniform_int(2)),
                  static_cast<double>(rng.uniform_int(4)),
                  rng.uniform() < 0.3 ? 1.0 : 0.0});
  }
  return d;
}

GtcapConfig cat_config() {
  GtcapConfig cfg;
  cfg.keys = {"K1", "K2", "K3"};
  cfg.targets = {"T"};
  return cfg;
}

// Exact count-based TCAP oracle for all-categorical data, normalized the
// same way mean_gtcap normalizes. Arithmetic mirrors the definition: plain
// counts, uniques = key combinations appearing exactly once.
double tcap_oracle(const Dataset& orig, const Dataset& synth,
                   const std::vector<int>& key_cols, int target_col) {
  const auto key_of = [&](const Dataset& d, std::size_t r) {
    std::string key;
    for (int c : key_cols) {
      const double v = d.cell(r, c);
      key += is_missing(v) ? std::string("NA") : std::to_string(v);
      key += '|';
    }
    return key;
  };
  std::map<std::string, int> combo_counts;
  for (std::size_t r = 0; r < orig.n_rows(); ++r) ++combo_counts[key_of(orig, r)];

  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < orig.n_rows(); ++r) {
    if (combo_counts[key_of(orig, r)] != 1) continue;
    const std::string key = key_of(orig, r);
    const double target = orig.cell(r, target_col);

    const auto cap = [&](const Dataset& d) {
      double matches = 0.0, correct = 0.0;
      for (std::size_t i = 0; i < d.n_rows(); ++i) {
        if (key_of(d, i) != key) continue;
        matches += 1.0;
        correct += d.cell(i, target_col) == target ? 1.0 : 0.0;
      }
      return matches == 0.0 ? 0.0 : correct / matches;
    };
    const double synth_val = cap(synth);
    const double orig_val = cap(orig);
    double base = 0.0;
    for (std::size_t i = 0; i < orig.n_rows(); ++i)
      base += orig.cell(i, target_col) == target ? 1.0 : 0.0;
    base /= static_cast<double>(orig.n_rows());

    if (std::fabs(orig_val - base) < 1e-9) continue;
    sum += (synth_val - base) / (orig_val - base);
    ++counted;
  }
  return counted == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : sum / static_cast<double>(counted);
}

Schema xy_schema() {
  Variable x, y;
  x.name = "X";
  x.kind = VariableKind::kQuantitative;
  y.name = "Y";
  y.kind = VariableKind::kQuantitative;
  return Schema({x, y});
}

}  // namespace

TEST_CASE("prox_coef closed forms") {
  const Schema schema = cat_schema();
  const std::vector<std::string> keys = {"K1", "K2", "K3"};

  CHECK(prox_coef(schema, {1, 0, 2, 1}, {1, 0, 2, 0}, keys, {}) == 1.0);
  CHECK(prox_coef(schema, {1, 0, 2, 1}, {1, 1, 2, 1}, keys, {}) == 0.0);

  Variable q;
  q.name = "Q";
  q.kind = VariableKind::kQuantitative;
  Variable c;
  c.name = "C";
  c.kind = VariableKind::kBinary;
  const Schema mixed({q, c});
  CHECK(prox_coef(mixed, {5.0, 1.0}, {7.0, 1.0}, {"Q", "C"}, {{"Q", 4.0}}) ==
        0.5);
  CHECK(prox_coef(mixed, {5.0, 1.0}, {7.0, 0.0}, {"Q", "C"}, {{"Q", 4.0}}) ==
        0.0);
  CHECK(prox_coef(mixed, {5.0, 1.0}, {5.0 + 8.0, 1.0}, {"Q"}, {{"Q", 4.0}}) ==
        0.0);
  CHECK_THROWS_AS(prox_coef(mixed, {5.0, 1.0}, {7.0, 1.0}, {"Q"}, {}),
                  ValidationError);
}

TEST_CASE("prox_coef treats missing as its own category / zero proximity") {
  Variable q;
  q.name = "Q";
  q.kind = VariableKind::kQuantitative;
  q.missing_allowed = true;
  Variable c;
  c.name = "C";
  c.kind = VariableKind::kBinary;
  c.missing_allowed = true;
  const Schema schema({q, c});
  const std::map<std::string, double> radii = {{"Q", 2.0}};

  CHECK(prox_coef(schema, {1.0, missing_value()}, {1.0, missing_value()},
                  {"Q", "C"}, radii) == 1.0);
  CHECK(prox_coef(schema, {1.0, missing_value()}, {1.0, 1.0}, {"Q", "C"},
                  radii) == 0.0);
  CHECK(prox_coef(schema, {missing_value(), 1.0}, {1.0, 1.0}, {"Q", "C"},
                  radii) == 0.0);
  CHECK(prox_coef(schema, {missing_value(), 1.0}, {missing_value(), 1.0},
                  {"Q", "C"}, radii) == 1.0);
}

TEST_CASE("prox_coef approaches 1 as radii grow") {
  const Schema schema = xy_schema();
  CHECK(prox_coef(schema, {0.0, 100.0}, {50.0, -100.0}, {"X", "Y"},
                  {{"X", 1e9}, {"Y", 1e9}}) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gtcap_row counting cases") {
  // 4 rows share the probe's keys, 3 of them carry its target.
  Dataset d(cat_schema(), 0);
  d.append_row({1, 0, 2, 1});
  d.append_row({1, 0, 2, 1});
  d.append_row({1, 0, 2, 1});
  d.append_row({1, 0, 2, 0});
  d.append_row({0, 1, 3, 1});
  GtcapConfig cfg = cat_config();
  CHECK(gtcap_row(d, {1, 0, 2, 1}, cfg) == 0.75);
  CHECK(gtcap_row(d, {0, 0, 0, 1}, cfg) == 0.0);

  Dataset single(cat_schema(), 0);
  single.append_row({1, 1, 1, 1});
  CHECK(gtcap_row(single, {1, 1, 1, 1}, cfg) == 1.0);
}

TEST_CASE("univariate_prediction counting cases") {
  Dataset d(cat_schema(), 0);
  for (int i = 0; i < 10; ++i)
    d.append_row({0, 0, 0, i < 3 ? 1.0 : 0.0});
  GtcapConfig cfg = cat_config();
  CHECK(univariate_prediction(d, {1, 1, 1, 1.0}, cfg) == doctest::Approx(0.3));
  CHECK(univariate_prediction(d, {1, 1, 1, 0.0}, cfg) == doctest::Approx(0.7));

  // Quantitative target farther than the radius from every row.
  Variable k;
  k.name = "K";
  k.kind = VariableKind::kBinary;
  Variable t;
  t.name = "T";
  t.kind = VariableKind::kQuantitative;
  Dataset q(Schema({k, t}), 0);
  q.append_row({0.0, 0.0});
  q.append_row({1.0, 1.0});
  GtcapConfig qcfg;
  qcfg.keys = {"K"};
  qcfg.targets = {"T"};
  qcfg.radii = {{"T", 0.5}};
  CHECK(univariate_prediction(q, {0.0, 100.0}, qcfg) == 0.0);
}

TEST_CASE("statistical_uniques reduces to exact combination uniqueness") {
  Dataset d(cat_schema(), 0);
  d.append_row({1, 0, 2, 1});  // unique combo
  d.append_row({0, 1, 3, 0});  // appears twice
  d.append_row({0, 1, 3, 1});
  const auto uniques = statistical_uniques(d, cat_config());
  CHECK(uniques == std::vector<std::size_t>{0});
}

TEST_CASE("statistical_uniques with quantitative keys uses summed proximity") {
  Variable k;
  k.name = "K";
  k.kind = VariableKind::kQuantitative;
  Variable t;
  t.name = "T";
  t.kind = VariableKind::kBinary;
  const Schema schema({k, t});
  GtcapConfig cfg;
  cfg.keys = {"K"};
  cfg.targets = {"T"};
  cfg.radii = {{"K", 4.0}};

  // Two rows at distance radius/2: mutual proximity 0.5 < 1, so both are
  // uniques when nothing else is close.
  Dataset two(schema, 0);
  two.append_row({0.0, 0.0});
  two.append_row({2.0, 1.0});
  CHECK(statistical_uniques(two, cfg).size() == 2);

  // A third row near the first pushes rows 0 and 2 to summed proximity
  // >= 1 while row 1 stays at 0.5 + 0.25 < 1.
  Dataset three = two;
  three.append_row({-1.0, 1.0});
  const auto uniques = statistical_uniques(three, cfg);
  CHECK(uniques == std::vector<std::size_t>{1});
}

TEST_CASE("mean_gtcap of an exact copy is 1") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset orig = random_cat_data(seed, 40);
    const GtcapReport report = mean_gtcap(orig, orig, cat_config());
    if (report.n_uniques == 0 || report.skipped == report.n_uniques) continue;
    CHECK(report.mean == 1.0);
  }
}

TEST_CASE("mean_gtcap equals the exhaustive TCAP oracle on categorical data") {
  const GtcapConfig cfg = cat_config();
  const std::vector<int> key_cols = {0, 1, 2};
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Dataset orig = random_cat_data(derive_key(seed, "orig"), 35);
    const Dataset synth = random_cat_data(derive_key(seed, "synth"), 35);
    const GtcapReport report = mean_gtcap(orig, synth, cfg);
    const double oracle = tcap_oracle(orig, synth, key_cols, 3);
    if (std::isnan(report.mean)) {
      CHECK(std::isnan(oracle));
    } else {
      CHECK(report.mean == oracle);  // exact: same counts, same arithmetic
      ++compared;
    }
  }
  CHECK(compared > 10);
}

TEST_CASE("baseline-rate synthetic data normalizes to about zero") {
  // Keys unique per row; synthetic targets resampled from the original
  // marginal, so the conditional rate equals the baseline in expectation.
  Variable k;
  k.name = "K";
  k.kind = VariableKind::kNominal;
  for (int i = 0; i < 128; ++i) k.nominal_levels.push_back("v" + std::to_string(i));
  Variable t;
  t.name = "T";
  t.kind = VariableKind::kBinary;
  const Schema schema({k, t});

  Rng rng(derive_key(404, "baseline"));
  Dataset orig(schema, 0);
  for (int i = 0; i < 100; ++i)
    orig.append_row({static_cast<double>(i),  // every key unique
                     rng.uniform() < 0.3 ? 1.0 : 0.0});
  Dataset synth(schema, 0);
  for (int copy = 0; copy < 20; ++copy) {
    for (int i = 0; i < 100; ++i) {
      const double t_draw = orig.cell(rng.uniform_int(100), 1);
      synth.append_row({static_cast<double>(i), t_draw});
    }
  }
  GtcapConfig cfg;
  cfg.keys = {"K"};
  cfg.targets = {"T"};
  const GtcapReport report = mean_gtcap(orig, synth, cfg);
  REQUIRE(report.n_uniques == 100);
  CHECK(std::fabs(report.mean) <= 0.05);
}

TEST_CASE("mean_gtcap with no uniques returns an explained empty report") {
  Dataset d(cat_schema(), 0);
  d.append_row({1, 0, 2, 1});
  d.append_row({1, 0, 2, 0});
  const GtcapReport report = mean_gtcap(d, d, cat_config());
  CHECK(report.n_uniques == 0);
  CHECK(std::isnan(report.mean));
  CHECK(!report.note.empty());
}

TEST_CASE("pmse closed forms") {
  CartParams params;
  params.min_leaf = 10;
  params.min_split = 20;

  SUBCASE("single-root propensity model gives exactly zero") {
    Rng rng(derive_key(5, "pmse0"));
    Dataset orig(xy_schema(), 0);
    Dataset synth(xy_schema(), 0);
    for (int i = 0; i < 50; ++i) {
      orig.append_row({rng.normal(), rng.normal()});
      synth.append_row({rng.normal(), rng.normal()});
    }
    CartParams root_only;
    root_only.min_leaf = 1000;
    root_only.min_split = 2000;
    const PmseReport r = pmse(orig, synth, root_only);
    CHECK(r.pmse == 0.0);
    CHECK(r.synthetic_share == 0.5);
  }

  SUBCASE("pure separation at c = 0.5 gives exactly 0.25") {
    Dataset orig(xy_schema(), 0);
    Dataset synth(xy_schema(), 0);
    for (int i = 0; i < 50; ++i) {
      orig.append_row({0.0, static_cast<double>(i)});
      synth.append_row({1.0, static_cast<double>(i)});
    }
    const PmseReport r = pmse(orig, synth, params, {"X"});
    CHECK(r.pmse == 0.25);
  }
}

TEST_CASE("shuffled copy scores below the null's 95th percentile") {
  Rng rng(derive_key(6, "pmse-null"));
  Dataset orig(xy_schema(), 0);
  for (int i = 0; i < 120; ++i) orig.append_row({rng.normal(), rng.normal()});
  Dataset synth = orig;  // identical rows, shuffled order
  for (std::size_t i = synth.n_rows(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    for (int c = 0; c < synth.n_cols(); ++c) {
      const double tmp = synth.cell(i - 1, c);
      synth.set_cell(i - 1, c, synth.cell(j, c));
      synth.set_cell(j, c, tmp);
    }
  }
  CartParams params;
  params.min_leaf = 10;
  params.min_split = 20;
  const double observed = pmse(orig, synth, params).pmse;

  // Null draws built directly: pool both datasets and split at random.
  std::vector<double> nulls;
  for (int p = 0; p < 40; ++p) {
    Rng perm(derive_key(7, "draw", static_cast<std::uint64_t>(p)));
    Dataset null_orig(orig.schema(), 0), null_synth(orig.schema(), 0);
    std::vector<std::size_t> idx(2 * orig.n_rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[perm.uniform_int(i)]);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t source = idx[i];
      const auto row = source < orig.n_rows()
                           ? orig.row(source)
                           : synth.row(source - orig.n_rows());
      (i < orig.n_rows() ? null_orig : null_synth).append_row(row);
    }
    nulls.push_back(pmse(null_orig, null_synth, params).pmse);
  }
  std::sort(nulls.begin(), nulls.end());
  CHECK(observed <= nulls[37]);  // 95th percentile of 40 draws
}

TEST_CASE("standardized ratio is about 1 for exchangeable halves") {
  double total = 0.0;
  const int reps = 5;
  CartParams params;
  params.min_leaf = 10;
  params.min_split = 20;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(derive_key(8, "halves", static_cast<std::uint64_t>(rep)));
    Dataset orig(xy_schema(), 0);
    Dataset synth(xy_schema(), 0);
    for (int i = 0; i < 240; ++i) {
      const std::vector<double> row = {rng.normal(), rng.normal()};
      if (rng.uniform() < 0.5) orig.append_row(row);
      else synth.append_row(row);
    }
    total += standardized_pmse_ratio(orig, synth, {}, params, 10,
                                     derive_key(9, "perm", static_cast<std::uint64_t>(rep)));
  }
  const double mean = total / reps;
  CHECK(mean >= 0.6);
  CHECK(mean <= 1.4);
}

TEST_CASE("disjoint supports blow the ratio up") {
  Dataset orig(xy_schema(), 0);
  Dataset synth(xy_schema(), 0);
  Rng rng(derive_key(10, "disjoint"));
  for (int i = 0; i < 100; ++i) {
    orig.append_row({rng.normal(0.0, 1.0), rng.normal()});
    synth.append_row({rng.normal(40.0, 1.0), rng.normal()});
  }
  CartParams params;
  params.min_leaf = 10;
  params.min_split = 20;
  const double ratio = standardized_pmse_ratio(orig, synth, {"X"}, params, 10, 3);
  CHECK(ratio > 3.0);
}

TEST_CASE("standardized ratio is deterministic given the seed") {
  Rng rng(derive_key(11, "det"));
  Dataset orig(xy_schema(), 0);
  Dataset synth(xy_schema(), 0);
  for (int i = 0; i < 60; ++i) {
    orig.append_row({rng.normal(), rng.normal()});
    synth.append_row({rng.normal(), rng.normal()});
  }
  CartParams params;
  params.min_leaf = 5;
  params.min_split = 10;
  const double a = standardized_pmse_ratio(orig, synth, {}, params, 1, 77);
  const double b = standardized_pmse_ratio(orig, synth, {}, params, 1, 77);
  CHECK(a == b);
}

TEST_CASE("pmse report with pair matrix") {
  const auto [train, control] = split_holdout(sgtest::fixture_data(), 199, 17);
  Dataset orig = exclude_variables(train, {"JOB"});
  // Small slice to keep the pair matrix cheap.
  const std::vector<std::string> keep = {"AGE", "SEVERITY", "DEPRESSION"};
  std::vector<std::string> drop;
  for (const auto& v : orig.schema().variables()) {
    if (std::find(keep.begin(), keep.end(), v.name) == keep.end())
      drop.push_back(v.name);
  }
  orig = exclude_variables(orig, drop);
  Dataset synth = orig;
  CartParams params;
  params.min_leaf = 10;
  params.min_split = 20;
  const PmseReport report = pmse_report(orig, synth, params, 5, 13, true);
  REQUIRE(report.pair_variables.size() == 3);
  CHECK(std::isnan(report.pair_ratios[1][0]));
  int finite = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j)
      finite += !std::isnan(report.pair_ratios[i][j]);
  CHECK(finite >= 1);
  CHECK(report.pmse >= 0.0);
  CHECK(report.pmse <= 0.25);
}

TEST_CASE("replicate_estimates") {
  const auto [train, control] = split_holdout(sgtest::fixture_data(), 199, 17);
  EstimateQuery query;
  query.filter_variable = "SEVERITY";
  query.filter_min = 5.0;
  query.targets = {"DEPRESSION", "AGORAPHOBIA", "PTSD", "ALCOHOL",
                   "SUBSTANCE", "SCHIZOPHRENIA"};
  const EstimateTable table =
      replicate_estimates({{"original", &train}, {"control", &control}}, query);
  CHECK(table.dataset_names.size() == 2);
  CHECK(table.targets.size() == 6);
  REQUIRE(table.prevalence.size() == 6);
  for (const auto& row : table.prevalence) {
    REQUIRE(row.size() == 2);
    for (const auto& v : row) {
      REQUIRE(v.has_value());
      CHECK(*v >= 0.0);
      CHECK(*v <= 1.0);
    }
  }

  SUBCASE("constant target passing every row gives 1.00") {
    Variable f, t;
    f.name = "F";
    f.kind = VariableKind::kBinary;
    t.name = "T";
    t.kind = VariableKind::kBinary;
    Dataset d(Schema({f, t}), 0);
    for (int i = 0; i < 10; ++i) d.append_row({1.0, 1.0});
    EstimateQuery q;
    q.filter_variable = "F";
    q.filter_min = 0.0;
    q.targets = {"T"};
    const EstimateTable one = replicate_estimates({{"d", &d}}, q);
    CHECK(*one.prevalence[0][0] == 1.0);
  }

  SUBCASE("empty subgroup is undefined, not zero") {
    Variable f, t;
    f.name = "F";
    f.kind = VariableKind::kBinary;
    t.name = "T";
    t.kind = VariableKind::kBinary;
    Dataset d(Schema({f, t}), 0);
    for (int i = 0; i < 10; ++i) d.append_row({0.0, 1.0});
    EstimateQuery q;
    q.filter_variable = "F";
    q.filter_min = 1.0;
    q.targets = {"T"};
    const EstimateTable none = replicate_estimates({{"d", &d}}, q);
    CHECK(!none.prevalence[0][0].has_value());
    CHECK(none.subgroup_sizes[0] == 0);
  }
}

TEST_CASE("compare_marginals") {
  const auto [train, control] = split_holdout(sgtest::fixture_data(), 199, 17);

  SUBCASE("identical datasets give identical tables and zero KS") {
    const MarginalComparison cmp = compare_marginals(train, train);
    for (const auto& cat : cmp.categorical)
      CHECK(cat.orig_counts == cat.synth_counts);
    for (const auto& q : cmp.quantitative) {
      CHECK(q.orig_counts == q.synth_counts);
      CHECK(q.ks == 0.0);
    }
  }

  SUBCASE("disjoint supports give KS = 1") {
    Dataset a(xy_schema(), 0), b(xy_schema(), 0);
    Rng rng(derive_key(31, "ks"));
    for (int i = 0; i < 50; ++i) {
      a.append_row({rng.uniform(0.0, 1.0), 0.0});
      b.append_row({rng.uniform(10.0, 11.0), 0.0});
    }
    const MarginalComparison cmp = compare_marginals(a, b);
    CHECK(cmp.quantitative[0].ks == 1.0);
  }

  SUBCASE("plot CSV round-trips the counts") {
    const MarginalComparison cmp = compare_marginals(train, control);
    const std::string path =
        (std::filesystem::temp_directory_path() / "sg_marginals.csv").string();
    write_marginals_csv(cmp, path);

    // Re-read and tally counts per variable.
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    std::map<std::string, std::size_t> orig_total, synth_total;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string var, kind, bin, oc, os, sc, ssh;
      std::getline(ss, var, ',');
      std::getline(ss, kind, ',');
      std::getline(ss, bin, ',');
      std::getline(ss, oc, ',');
      std::getline(ss, os, ',');
      std::getline(ss, sc, ',');
      std::getline(ss, ssh, ',');
      orig_total[var] += std::stoul(oc);
      synth_total[var] += std::stoul(sc);
    }
    for (const auto& cat : cmp.categorical) {
      std::size_t expect = 0;
      for (auto v : cat.orig_counts) expect += v;
      CHECK(orig_total[cat.variable] == expect);
    }
    for (const auto& q : cmp.quantitative) {
      std::size_t expect = 0;
      for (auto v : q.synth_counts) expect += v;
      CHECK(synth_total[q.variable] == expect);
    }
  }
}

TEST_CASE("metric bounds on random inputs") {
  Rng rng(derive_key(55, "bounds"));
  const GtcapConfig cfg = cat_config();
  for (int trial = 0; trial < 10; ++trial) {
    const Dataset orig = random_cat_data(derive_key(trial, "bo"), 30);
    const Dataset synth = random_cat_data(derive_key(trial, "bs"), 30);
    for (int probe = 0; probe < 5; ++probe) {
      const auto row = orig.row(rng.uniform_int(orig.n_rows()));
      const double g = gtcap_row(synth, row, cfg);
      CHECK(g >= 0.0);
      CHECK(g <= 1.0);
    }
    CartParams params;
    params.min_leaf = 5;
    params.min_split = 10;
    const PmseReport r = pmse(orig, synth, params);
    const double c = r.synthetic_share;
    CHECK(r.pmse >= 0.0);
    CHECK(r.pmse <= std::max(c, 1.0 - c) * std::max(c, 1.0 - c));
  }
}
