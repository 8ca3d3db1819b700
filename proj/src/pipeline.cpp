#include "synthguard/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>

#include "synthguard/csv.hpp"
#include "synthguard/errors.hpp"
#include "synthguard/rng.hpp"

namespace synthguard {

namespace fs = std::filesystem;

namespace {

CartParams cart_from_json(const nlohmann::json& j, const CartParams& defaults) {
  CartParams p = defaults;
  p.min_leaf = j.value("min_leaf", p.min_leaf);
  p.min_split = j.value("min_split", p.min_split);
  p.max_depth = j.value("max_depth", p.max_depth);
  return p;
}

PopulationModel population_from_json(const nlohmann::json& j) {
  PopulationModel m;
  m.population_size = j.at("size").get<std::int64_t>();
  const auto& dj = j.at("distribution");
  const std::string type = dj.at("type").get<std::string>();
  if (type == "normal") {
    m.distribution = std::make_shared<NormalDistribution>(
        dj.at("mean").get<double>(), dj.at("sd").get<double>());
  } else if (type == "uniform") {
    m.distribution = std::make_shared<UniformDistribution>(
        dj.at("lo").get<double>(), dj.at("hi").get<double>());
  } else {
    throw ValidationError("config: unknown distribution type " + type);
  }
  m.validate();
  return m;
}

void write_json_atomic(const nlohmann::json& j, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return j;
}

double finite_or_throw(double v, const std::string& what) {
  if (!std::isfinite(v)) throw ValidationError("config: " + what + " must be finite");
  return v;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  if (!j.contains("seed")) throw ValidationError("config: missing seed");
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.input_csv = j.value("input_csv", "");
  cfg.schema_path = j.value("schema", "");
  if (cfg.input_csv.empty() || cfg.schema_path.empty())
    throw ValidationError("config: input_csv and schema are required");

  if (j.contains("split")) {
    SplitConfig s;
    s.holdout = j["split"].at("holdout").get<std::size_t>();
    cfg.split = s;
  }
  if (j.contains("synth")) {
    SynthConfig s;
    const auto& sj = j["synth"];
    s.m = sj.value("m", static_cast<std::size_t>(0));
    if (sj.contains("order"))
      s.order = sj["order"].get<std::vector<std::string>>();
    if (sj.contains("cart")) s.cart = cart_from_json(sj["cart"], s.cart);
    cfg.synth = s;
  }
  if (j.contains("filter")) {
    FilterConfig f;
    const auto& fj = j["filter"];
    f.spec.variables = fj.at("variables").get<std::vector<std::string>>();
    const std::string metric = fj.value("metric", "mahalanobis");
    if (metric == "mahalanobis")
      f.spec.metric = DistanceMetric::kMahalanobis;
    else if (metric == "jaccard")
      f.spec.metric = DistanceMetric::kJaccard;
    else
      throw ValidationError("config: unknown metric " + metric);
    f.target = fj.value("target", static_cast<std::size_t>(0));
    f.max_rounds = fj.value("max_rounds", static_cast<std::size_t>(50));
    cfg.filter = f;
  }
  if (j.contains("noise")) {
    NoiseConfig n;
    const auto& nj = j["noise"];
    n.target_ecap = finite_or_throw(nj.value("target_ecap", 0.2), "target_ecap");
    n.sample_size = nj.value("sample_size", 0);
    if (nj.contains("exempt"))
      n.exempt = nj["exempt"].get<std::vector<std::string>>();
    if (nj.contains("populations")) {
      for (const auto& [name, pj] : nj["populations"].items())
        n.populations.emplace(name, population_from_json(pj));
    }
    if (nj.contains("mc")) {
      n.mc.neighbor_replicates =
          nj["mc"].value("neighbor_replicates", n.mc.neighbor_replicates);
      n.mc.probability_samples =
          nj["mc"].value("probability_samples", n.mc.probability_samples);
    }
    if (nj.contains("grid")) {
      n.grid_points = nj["grid"].value("points", n.grid_points);
      if (nj["grid"].contains("sigmas"))
        n.explicit_grid = nj["grid"]["sigmas"].get<std::vector<double>>();
    }
    cfg.noise = n;
  }
  if (j.contains("assess")) {
    AssessConfig a;
    const auto& aj = j["assess"];
    if (aj.contains("gtcap")) {
      a.gtcap.keys = aj["gtcap"].at("keys").get<std::vector<std::string>>();
      a.gtcap.targets = aj["gtcap"].at("targets").get<std::vector<std::string>>();
      if (aj["gtcap"].contains("radii")) {
        for (const auto& [name, r] : aj["gtcap"]["radii"].items())
          a.gtcap.radii[name] = r.get<double>();
      }
    }
    if (aj.contains("pmse")) {
      a.pmse_params = cart_from_json(aj["pmse"], a.pmse_params);
      a.pmse_permutations = aj["pmse"].value("permutations", a.pmse_permutations);
      a.pmse_pairs = aj["pmse"].value("pairs", a.pmse_pairs);
    }
    if (aj.contains("estimates")) {
      EstimateQuery q;
      q.filter_variable = aj["estimates"].at("filter_variable").get<std::string>();
      q.filter_min = aj["estimates"].at("filter_min").get<double>();
      q.targets = aj["estimates"].at("targets").get<std::vector<std::string>>();
      a.estimates = q;
    }
    cfg.assess = a;
  }
  cfg.hash = config_hash(j);
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  return from_json(load_json(path));
}

void PipelineConfig::validate(const Schema& schema) const {
  if (synth) {
    synth->cart.validate();
    for (const auto& name : synth->order) schema.require(name);
  }
  if (filter) filter->spec.validate(schema);
  if (noise) {
    if (!(noise->target_ecap > 0.0 && noise->target_ecap <= 1.0))
      throw ValidationError("config: target_ecap must lie in (0, 1]");
    for (const auto& name : noise->exempt) schema.require(name);
    for (const auto& [name, model] : noise->populations) {
      const Variable& var = schema.var(schema.require(name));
      if (var.kind != VariableKind::kQuantitative)
        throw ValidationError("config: population model on non-quantitative " + name);
      model.validate();
    }
    for (const auto& var : schema.variables()) {
      if (var.kind != VariableKind::kQuantitative) continue;
      const bool exempt = std::find(noise->exempt.begin(), noise->exempt.end(),
                                    var.name) != noise->exempt.end();
      if (!exempt && noise->populations.find(var.name) == noise->populations.end())
        throw ValidationError("config: quantitative variable " + var.name +
                              " needs a population model or an exempt entry");
    }
  }
  if (assess) {
    if (!assess->gtcap.keys.empty()) assess->gtcap.validate(schema);
    assess->pmse_params.validate();
    if (assess->estimates) assess->estimates->validate(schema);
  }
}

std::uint64_t config_hash(const nlohmann::json& canonical) {
  return label_key(canonical.dump());
}

Pipeline::Pipeline(PipelineConfig config, std::string out_dir)
    : config_(std::move(config)), out_dir_(std::move(out_dir)) {
  schema_ = load_schema(config_.schema_path);
  config_.validate(schema_);
  fs::create_directories(private_dir());
  fs::create_directories(release_dir());

  nlohmann::json manifest;
  const std::string path = out_dir_ + "/manifest.json";
  if (fs::exists(path)) manifest = load_json(path);
  manifest["version"] = kToolkitVersion;
  manifest["seed"] = config_.seed;
  manifest["config_hash"] = config_.hash;
  write_json_atomic(manifest, path);
}

std::uint64_t Pipeline::stage_seed(std::string_view stage) const {
  return derive_key(config_.seed, stage);
}

void Pipeline::write_manifest_entry(const std::string& key,
                                    const nlohmann::json& value) {
  const std::string path = out_dir_ + "/manifest.json";
  nlohmann::json manifest;
  if (fs::exists(path)) manifest = load_json(path);
  manifest[key] = value;
  write_json_atomic(manifest, path);
}

void Pipeline::record_stage(const std::string& stage, double elapsed_ms,
                            const std::vector<std::string>& outputs) {
  const std::string path = out_dir_ + "/manifest.json";
  nlohmann::json manifest;
  if (fs::exists(path)) manifest = load_json(path);
  manifest["stages"][stage]["elapsed_ms"] = elapsed_ms;
  manifest["stages"][stage]["outputs"] = outputs;
  write_json_atomic(manifest, path);
}

namespace {

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

Dataset Pipeline::training_data() {
  const std::string train_path = private_dir() + "/train.csv";
  if (config_.split) {
    if (!fs::exists(train_path)) run_split();
    return load_csv(train_path, schema_);
  }
  return load_csv(config_.input_csv, schema_);
}

Dataset Pipeline::pre_noise_synth() {
  const std::string filtered = private_dir() + "/synthetic_filtered.csv";
  const std::string raw = private_dir() + "/synthetic_raw.csv";
  if (config_.filter) {
    if (!fs::exists(filtered)) run_filter();
    return load_csv(filtered, schema_);
  }
  if (!fs::exists(raw)) run_synth();
  return load_csv(raw, schema_);
}

Dataset Pipeline::release_synth() {
  const std::string path = release_dir() + "/synthetic.csv";
  if (!fs::exists(path))
    throw ValidationError("release synthetic.csv missing; run the noise stage "
                          "(or the full pipeline) first");
  return load_csv(path, schema_);
}

void Pipeline::run_split() {
  if (!config_.split) throw ValidationError("config has no split section");
  StageTimer timer;
  const Dataset input = load_csv(config_.input_csv, schema_);
  auto [train, control] =
      split_holdout(input, config_.split->holdout, stage_seed("split"));
  write_csv(train, private_dir() + "/train.csv");
  write_csv(control, private_dir() + "/control.csv");
  record_stage("split", timer.elapsed_ms(),
               {"private/train.csv", "private/control.csv"});
}

void Pipeline::run_synth() {
  if (!config_.synth) throw ValidationError("config has no synth section");
  StageTimer timer;
  const Dataset train = training_data();
  SynthConfig s = *config_.synth;
  s.cart.seed = stage_seed("synth");
  const std::size_t m = s.m == 0 ? train.n_rows() : s.m;
  const Dataset synth = synthesize(train, s.order, s.cart, m);
  write_csv(synth, private_dir() + "/synthetic_raw.csv");
  record_stage("synth", timer.elapsed_ms(), {"private/synthetic_raw.csv"});
}

void Pipeline::run_filter() {
  if (!config_.filter) throw ValidationError("config has no filter section");
  if (!config_.synth)
    throw ValidationError("filter stage requires a synth section");
  StageTimer timer;
  const Dataset train = training_data();
  SynthConfig s = *config_.synth;
  s.cart.seed = stage_seed("synth");  // round one must match the synth stage
  const std::size_t m = s.m == 0 ? train.n_rows() : s.m;
  const std::size_t target =
      config_.filter->target == 0 ? m : config_.filter->target;

  FilterReport report;
  const Dataset filtered =
      filtered_synthesize(train, s.order, s.cart, config_.filter->spec, target,
                          config_.filter->max_rounds, &report);
  write_csv(filtered, private_dir() + "/synthetic_filtered.csv");

  nlohmann::json rj;
  rj["target"] = report.target;
  rj["reached"] = report.reached;
  rj["covariance_determinant"] = report.covariance_determinant;
  rj["covariance_rcond"] = report.covariance_rcond;
  rj["rounds"] = nlohmann::json::array();
  for (const auto& r : report.rounds) {
    rj["rounds"].push_back({{"generated", r.generated},
                            {"retained", r.retained},
                            {"acceptance", r.acceptance}});
  }
  rj["top_correlations"] = nlohmann::json::array();
  for (const auto& c : report.top_correlations) {
    rj["top_correlations"].push_back(
        {{"a", c.a}, {"b", c.b}, {"correlation", c.correlation}});
  }
  write_json_atomic(rj, private_dir() + "/filter_report.json");
  record_stage("filter", timer.elapsed_ms(),
               {"private/synthetic_filtered.csv", "private/filter_report.json"});
}

void Pipeline::run_noise_calibrate() {
  if (!config_.noise) throw ValidationError("config has no noise section");
  StageTimer timer;
  const Dataset synth = pre_noise_synth();
  const NoiseConfig& n = *config_.noise;
  const int sample_size =
      n.sample_size > 0 ? n.sample_size : static_cast<int>(synth.n_rows());

  nlohmann::json private_report;
  nlohmann::json public_manifest;
  for (const auto& var : schema_.variables()) {
    if (var.kind != VariableKind::kQuantitative) continue;
    if (std::find(n.exempt.begin(), n.exempt.end(), var.name) != n.exempt.end()) {
      public_manifest[var.name] = {{"law", "none"},
                                   {"reason", "exempt from noise addition"}};
      continue;
    }
    const PopulationModel& model = n.populations.at(var.name);
    std::vector<double> values;
    for (double v : synth.column(schema_.require(var.name))) {
      if (!is_missing(v)) values.push_back(v);
    }
    if (values.empty())
      throw ValidationError("noise: variable " + var.name + " has no values");

    McParams mc = n.mc;
    mc.seed = derive_key(stage_seed("noise"), "calibrate", var.name);
    CalibrationResult cal =
        calibrate_noise(values, model, sample_size, n.target_ecap,
                        n.explicit_grid, mc, n.grid_points);

    nlohmann::json vj;
    vj["selected_sigma"] = cal.noise.sigma;
    vj["recommended_sigma"] = cal.recommended_sigma;
    vj["target_ecap"] = cal.target;
    vj["binding_value"] = cal.binding_value;
    vj["grid"] = cal.grid;
    vj["max_ecap"] = cal.max_ecap;
    vj["difference_quotients"] = cal.difference_quotients;
    vj["values"] = nlohmann::json::array();
    for (const auto& e : cal.table) {
      vj["values"].push_back({{"value", e.value},
                              {"ecap", e.ecap_at_selected},
                              {"neighbor_below", e.neighbors.below},
                              {"neighbor_above", e.neighbors.above}});
    }
    private_report[var.name] = std::move(vj);
    public_manifest[var.name] = {{"law", "normal"},
                                 {"mean", 0.0},
                                 {"sigma", cal.noise.sigma}};
  }

  nlohmann::json wrapped;
  wrapped["DO_NOT_PUBLISH"] =
      "per-value ECAP results; publishing them enables inversion attacks";
  wrapped["variables"] = std::move(private_report);
  write_json_atomic(wrapped, private_dir() + "/ecap_report.json");
  write_json_atomic(public_manifest, release_dir() + "/noise_manifest.json");
  write_manifest_entry("noise_manifest", public_manifest);
  record_stage("noise_calibrate", timer.elapsed_ms(),
               {"private/ecap_report.json", "release/noise_manifest.json"});
}

void Pipeline::run_noise_apply() {
  if (!config_.noise) throw ValidationError("config has no noise section");
  StageTimer timer;
  const std::string manifest_path = release_dir() + "/noise_manifest.json";
  if (!fs::exists(manifest_path)) run_noise_calibrate();
  const nlohmann::json manifest = load_json(manifest_path);

  Dataset synth = pre_noise_synth();
  for (const auto& [name, entry] : manifest.items()) {
    if (entry.value("law", "") != "normal") continue;
    NoiseSpec spec;
    spec.sigma = entry.at("sigma").get<double>();
    synth = apply_noise(synth, name, spec,
                        derive_key(stage_seed("noise"), "apply", name));
  }
  write_csv(synth, release_dir() + "/synthetic.csv");
  record_stage("noise_apply", timer.elapsed_ms(), {"release/synthetic.csv"});
}

void Pipeline::run_assess() {
  if (!config_.assess) throw ValidationError("config has no assess section");
  StageTimer timer;
  const Dataset train = training_data();
  const Dataset synth = config_.noise ? release_synth() : pre_noise_synth();
  const AssessConfig& a = *config_.assess;

  nlohmann::json privacy;
  if (!a.gtcap.keys.empty()) {
    const GtcapReport report = mean_gtcap(train, synth, a.gtcap);
    privacy["mean_gtcap"] = report.mean;
    privacy["n_uniques"] = report.n_uniques;
    privacy["skipped"] = report.skipped;
    privacy["zero_denominator"] = report.zero_denominator;
    if (!report.note.empty()) privacy["note"] = report.note;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& u : report.uniques) {
      rows.push_back({{"orig_row", u.orig_row},
                      {"synth", u.synth_value},
                      {"base", u.base_value},
                      {"orig", u.orig_value},
                      {"normalized", u.skipped ? nlohmann::json() : nlohmann::json(u.normalized)}});
    }
    privacy["uniques"] = std::move(rows);
  }
  write_json_atomic(privacy, private_dir() + "/privacy_report.json");

  nlohmann::json utility;
  {
    const PmseReport report =
        pmse_report(train, synth, a.pmse_params, a.pmse_permutations,
                    stage_seed("assess"), a.pmse_pairs);
    utility["pmse"] = report.pmse;
    utility["synthetic_share"] = report.synthetic_share;
    utility["standardized_ratio"] = report.standardized_ratio;
    utility["null_mean"] = report.null_mean;
    utility["permutations"] = report.permutations;
    if (config_.noise) {
      // Unpenalized propensity trees can single out the noise fingerprint
      // itself (noised cells are no longer on the original value grid), so
      // the pre-noise score is reported alongside for interpretation.
      const PmseReport pre = pmse(train, pre_noise_synth(), a.pmse_params);
      utility["pmse_pre_noise"] = pre.pmse;
    }
    if (a.pmse_pairs) {
      utility["pair_variables"] = report.pair_variables;
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& row : report.pair_ratios) {
        nlohmann::json cells = nlohmann::json::array();
        for (double v : row)
          cells.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
        rows.push_back(std::move(cells));
      }
      utility["pair_ratios"] = std::move(rows);
    }
  }
  if (a.estimates) {
    const EstimateTable table = replicate_estimates(
        {{"original", &train}, {"synthetic", &synth}}, *a.estimates);
    nlohmann::json ej;
    ej["filter_variable"] = a.estimates->filter_variable;
    ej["filter_min"] = a.estimates->filter_min;
    ej["datasets"] = table.dataset_names;
    ej["subgroup_sizes"] = table.subgroup_sizes;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t t = 0; t < table.targets.size(); ++t) {
      nlohmann::json row;
      row["target"] = table.targets[t];
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& v : table.prevalence[t])
        cells.push_back(v ? nlohmann::json(*v) : nlohmann::json());
      row["prevalence"] = std::move(cells);
      rows.push_back(std::move(row));
    }
    ej["estimates"] = std::move(rows);
    utility["estimate_replication"] = std::move(ej);
  }
  {
    const MarginalComparison cmp = compare_marginals(train, synth);
    fs::create_directories(release_dir() + "/plots");
    write_marginals_csv(cmp, release_dir() + "/plots/marginals.csv");
    nlohmann::json ks = nlohmann::json::object();
    for (const auto& q : cmp.quantitative) ks[q.variable] = q.ks;
    utility["marginal_ks"] = std::move(ks);
  }
  write_json_atomic(utility, release_dir() + "/utility_report.json");
  record_stage("assess", timer.elapsed_ms(),
               {"private/privacy_report.json", "release/utility_report.json",
                "release/plots/marginals.csv"});
}

void Pipeline::run_all() {
  if (config_.split) run_split();
  if (config_.synth) run_synth();
  if (config_.filter) run_filter();
  if (config_.noise) {
    run_noise_calibrate();
    run_noise_apply();
  } else if (config_.synth) {
    // No noise stage: the release dataset is the pre-noise synthetic.
    write_csv(pre_noise_synth(), release_dir() + "/synthetic.csv");
  }
  if (config_.assess) run_assess();
  release_safety_scan();

  nlohmann::json inventory = nlohmann::json::array();
  for (const auto& entry : fs::recursive_directory_iterator(out_dir_)) {
    if (entry.is_regular_file())
      inventory.push_back(fs::relative(entry.path(), out_dir_).string());
  }
  std::sort(inventory.begin(), inventory.end());
  write_manifest_entry("inventory", inventory);
}

void Pipeline::release_safety_scan() {
  const std::string synth_path = release_dir() + "/synthetic.csv";
  if (fs::exists(synth_path)) {
    const Dataset train = training_data();
    const Dataset synth = load_csv(synth_path, schema_);

    // Exact full-row matches against the original data are only tolerable
    // where the filter rule itself permits them: the matched original must
    // have an exact duplicate (zero-distance neighbor) among the originals.
    std::size_t matches = 0;
    for (std::size_t s = 0; s < synth.n_rows(); ++s) {
      const std::vector<double> row = synth.row(s);
      for (std::size_t o = 0; o < train.n_rows(); ++o) {
        bool equal = true;
        for (int c = 0; c < train.n_cols() && equal; ++c) {
          const double a = row[static_cast<std::size_t>(c)];
          const double b = train.cell(o, c);
          equal = (is_missing(a) && is_missing(b)) || a == b;
        }
        if (!equal) continue;
        ++matches;
        bool duplicated = false;
        for (std::size_t o2 = 0; o2 < train.n_rows() && !duplicated; ++o2) {
          if (o2 == o) continue;
          bool same = true;
          for (int c = 0; c < train.n_cols() && same; ++c) {
            const double a = train.cell(o, c);
            const double b = train.cell(o2, c);
            same = (is_missing(a) && is_missing(b)) || a == b;
          }
          duplicated = same;
        }
        if (!duplicated)
          throw Error("release safety: synthetic row " + std::to_string(s + 1) +
                      " reproduces a non-duplicated original row");
        break;
      }
    }
    write_manifest_entry("release_scan",
                         {{"exact_matches", matches}, {"passed", true}});
  }

  // Release JSON files must not leak ECAP values or per-row distances.
  for (const auto& entry : fs::recursive_directory_iterator(release_dir())) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const nlohmann::json j = load_json(entry.path().string());
    std::vector<const nlohmann::json*> stack{&j};
    while (!stack.empty()) {
      const nlohmann::json* cur = stack.back();
      stack.pop_back();
      if (cur->is_object()) {
        for (const auto& [key, value] : cur->items()) {
          std::string lower = key;
          std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
          if (lower.find("ecap") != std::string::npos ||
              lower.find("distance") != std::string::npos)
            throw Error("release safety: " + entry.path().string() +
                        " carries forbidden key '" + key + "'");
          stack.push_back(&value);
        }
      } else if (cur->is_array()) {
        for (const auto& value : *cur) stack.push_back(&value);
      }
    }
  }
}

}  // namespace synthguard
