// Generates the bundled simulated prison-study fixture: 799 rows over the
// 26-variable schema used throughout the tests, with correlated mental
// health outcomes driven by two latent factors and a few percent of missing
// values on selected columns. Run from the repository root:
//   build/tools/make_fixture data

#include <cmath>
#include <iostream>
#include <string>

#include "synthguard/csv.hpp"
#include "synthguard/dataset.hpp"
#include "synthguard/rng.hpp"

using namespace synthguard;

namespace {

constexpr std::uint64_t kFixtureSeed = 20240402;
constexpr std::size_t kRows = 799;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_round(double v, double lo, double hi) {
  return std::min(hi, std::max(lo, std::round(v)));
}

int ordinal_from_latent(double latent, const std::vector<double>& cuts) {
  int level = 1;
  for (double c : cuts) {
    if (latent > c) ++level;
  }
  return level;
}

Schema fixture_schema() {
  std::vector<Variable> vars;
  const auto quant = [&](const std::string& name, bool missing = false) {
    Variable v;
    v.name = name;
    v.kind = VariableKind::kQuantitative;
    v.missing_allowed = missing;
    vars.push_back(v);
  };
  const auto binary = [&](const std::string& name, bool missing = false) {
    Variable v;
    v.name = name;
    v.kind = VariableKind::kBinary;
    v.missing_allowed = missing;
    vars.push_back(v);
  };
  const auto ordinal = [&](const std::string& name, int levels,
                           bool missing = false) {
    Variable v;
    v.name = name;
    v.kind = VariableKind::kOrdinal;
    v.missing_allowed = missing;
    for (int l = 1; l <= levels; ++l) v.ordinal_levels.push_back(l);
    vars.push_back(v);
  };

  quant("AGE");
  Variable job;
  job.name = "JOB";
  job.kind = VariableKind::kNominal;
  job.nominal_levels = {"farmer",       "craftsman", "manager", "intermediate",
                        "employee",     "worker",    "other",   "no job"};
  vars.push_back(job);
  ordinal("DURATION", 5);
  binary("DISCIPLINARY");
  quant("N.CHILDREN");
  quant("N.SIBLINGS", /*missing=*/true);
  ordinal("EDUCATION", 5, /*missing=*/true);
  binary("SEPARATION");
  binary("CHILDREN.JUDGE");
  binary("PLACEMENT");
  binary("ABUSE", /*missing=*/true);
  ordinal("SEVERITY", 7);
  binary("DEPRESSION");
  binary("AGORAPHOBIA");
  binary("PTSD");
  binary("ALCOHOL");
  binary("SUBSTANCE");
  binary("SCHIZOPHRENIA");
  ordinal("PERSONALITY", 4);
  ordinal("NS", 3);
  ordinal("HA", 3);
  ordinal("RD", 3);
  ordinal("SUICIDE.SCORE", 6);
  binary("SUICIDE.HR");
  binary("SUICIDE.PAST");
  quant("DUR.INTERV");
  return Schema(std::move(vars));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "data";
  const Schema schema = fixture_schema();
  Dataset data(schema, 0);
  Rng rng(derive_key(kFixtureSeed, "fixture"));

  for (std::size_t i = 0; i < kRows; ++i) {
    // Latent severity of disorder (z) and childhood adversity (adv).
    const double z = rng.normal();
    const double adv = 0.55 * z + 0.84 * rng.normal();

    const double age = clamp_round(rng.normal(34.0, 8.0), 18.0, 60.0);
    const double age_c = (age - 34.0) / 8.0;

    int job;
    {
      const double u = rng.uniform();
      const double unemployed = logistic(-1.3 + 0.8 * adv);
      if (u < unemployed) {
        job = 7;
      } else {
        static const double w[7] = {0.02, 0.09, 0.05, 0.10, 0.22, 0.34, 0.18};
        double pick = rng.uniform();
        job = 6;
        for (int k = 0; k < 7; ++k) {
          if (pick < w[k]) {
            job = k;
            break;
          }
          pick -= w[k];
        }
      }
    }

    const int duration =
        ordinal_from_latent(0.35 * age_c + 0.25 * z + rng.normal(),
                            {-1.6, -0.6, 0.2, 1.1});
    const double disciplinary =
        rng.uniform() < logistic(-0.9 + 0.7 * z - 0.4 * age_c) ? 1.0 : 0.0;

    double n_children = clamp_round(
        0.08 * std::exp(rng.normal(0.0, 0.35)) * (age - 16.0) +
            0.5 * rng.normal(),
        0.0, 8.0);
    double n_siblings =
        clamp_round(3.6 + 1.1 * adv + 1.6 * rng.normal(), 0.0, 10.0);
    const int education = ordinal_from_latent(
        -0.45 * adv - 0.15 * z + rng.normal(), {-0.4, 0.4, 1.1, 1.9});

    const double separation =
        rng.uniform() < logistic(-0.8 + 1.1 * adv) ? 1.0 : 0.0;
    const double children_judge =
        rng.uniform() < logistic(-1.7 + 1.3 * adv) ? 1.0 : 0.0;
    const double placement =
        rng.uniform() < logistic(-1.9 + 1.4 * adv) ? 1.0 : 0.0;
    double abuse = rng.uniform() < logistic(-1.2 + 1.2 * adv) ? 1.0 : 0.0;

    const int severity =
        ordinal_from_latent(0.9 * z + 0.45 * rng.normal(),
                            {-1.3, -0.6, -0.1, 0.45, 1.05, 1.7});
    const double depression =
        rng.uniform() < logistic(-1.1 + 1.3 * z) ? 1.0 : 0.0;
    const double agoraphobia =
        rng.uniform() < logistic(-2.3 + 1.0 * z) ? 1.0 : 0.0;
    const double ptsd =
        rng.uniform() < logistic(-2.1 + 0.9 * z + 0.7 * adv) ? 1.0 : 0.0;
    const double alcohol =
        rng.uniform() < logistic(-1.7 + 0.7 * z + 0.4 * adv) ? 1.0 : 0.0;
    const double substance =
        rng.uniform() < logistic(-1.6 + 0.6 * z - 0.3 * age_c) ? 1.0 : 0.0;
    const double schizophrenia =
        rng.uniform() < logistic(-2.9 + 0.9 * z) ? 1.0 : 0.0;

    const int personality = ordinal_from_latent(0.8 * z + 0.6 * rng.normal(),
                                                {-0.3, 0.7, 1.6});
    const int ns = ordinal_from_latent(0.5 * z + 0.87 * rng.normal(), {-0.5, 0.6});
    const int ha = ordinal_from_latent(0.6 * z + 0.8 * rng.normal(), {-0.4, 0.7});
    const int rd = ordinal_from_latent(-0.3 * z + 0.95 * rng.normal(), {-0.6, 0.5});

    const double suicide_latent =
        0.8 * z + 0.9 * depression + 0.5 * adv + 0.8 * rng.normal();
    const int suicide_score =
        ordinal_from_latent(suicide_latent, {0.1, 0.9, 1.6, 2.2, 2.9});
    const double suicide_hr = suicide_score >= 5 ? 1.0 : 0.0;
    const double suicide_past =
        rng.uniform() < logistic(-2.0 + 0.75 * suicide_latent) ? 1.0 : 0.0;

    const double dur_interv =
        clamp_round(rng.normal(110.0 + 6.0 * severity, 18.0), 45.0, 200.0);

    // Sparse missingness on three columns.
    if (rng.uniform() < 0.03) n_siblings = missing_value();
    double education_cell = static_cast<double>(education);
    if (rng.uniform() < 0.02) education_cell = missing_value();
    if (rng.uniform() < 0.04) abuse = missing_value();

    data.append_row({age,
                     static_cast<double>(job),
                     static_cast<double>(duration),
                     disciplinary,
                     n_children,
                     n_siblings,
                     education_cell,
                     separation,
                     children_judge,
                     placement,
                     abuse,
                     static_cast<double>(severity),
                     depression,
                     agoraphobia,
                     ptsd,
                     alcohol,
                     substance,
                     schizophrenia,
                     static_cast<double>(personality),
                     static_cast<double>(ns),
                     static_cast<double>(ha),
                     static_cast<double>(rd),
                     static_cast<double>(suicide_score),
                     suicide_hr,
                     suicide_past,
                     dur_interv});
  }

  data.validate();
  save_schema(schema, out_dir + "/prison_sim.schema.json");
  write_csv(data, out_dir + "/prison_sim.csv");
  std::cout << "wrote " << data.n_rows() << " rows to " << out_dir
            << "/prison_sim.csv\n";
  return 0;
}
