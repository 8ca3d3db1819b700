#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthguard/cart.hpp"
#include "synthguard/dataset.hpp"
#include "synthguard/distfilter.hpp"
#include "synthguard/ecap.hpp"
#include "synthguard/metrics.hpp"

namespace synthguard {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct SplitConfig {
  std::size_t holdout = 0;
};

struct SynthConfig {
  std::size_t m = 0;  // 0: same length as the training data
  std::vector<std::string> order;
  CartParams cart;
};

struct FilterConfig {
  DistanceSpec spec;
  std::size_t target = 0;  // 0: same as synth m
  std::size_t max_rounds = 50;
};

struct NoiseConfig {
  double target_ecap = 0.2;
  int sample_size = 0;  // n; 0: number of synthetic rows
  std::vector<std::string> exempt;
  std::map<std::string, PopulationModel> populations;
  McParams mc;
  int grid_points = 50;
  std::vector<double> explicit_grid;
};

struct AssessConfig {
  GtcapConfig gtcap;
  CartParams pmse_params{.min_leaf = 10, .min_split = 20, .max_depth = 30};
  int pmse_permutations = 20;
  bool pmse_pairs = false;
  std::optional<EstimateQuery> estimates;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string input_csv;
  std::string schema_path;
  std::optional<SplitConfig> split;
  std::optional<SynthConfig> synth;
  std::optional<FilterConfig> filter;
  std::optional<NoiseConfig> noise;
  std::optional<AssessConfig> assess;
  std::uint64_t hash = 0;  // of the canonical config JSON

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::string& path);
  // Validates stage sections against the schema; throws ValidationError.
  void validate(const Schema& schema) const;
};

// Stage driver. Outputs go to <out>/private and <out>/release; the run
// manifest (never containing ECAP values or original data) sits at
// <out>/manifest.json. Per-stage randomness comes from fixed labeled
// sub-seeds of the global seed, so skipping a stage leaves the others'
// streams unchanged.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::string out_dir);

  void run_split();
  void run_synth();
  void run_filter();
  void run_noise_calibrate();
  void run_noise_apply();
  void run_assess();
  // split? -> synth -> filter? -> noise? -> assess?, then the release scan.
  void run_all();

  const std::string& out_dir() const { return out_dir_; }
  std::string private_dir() const { return out_dir_ + "/private"; }
  std::string release_dir() const { return out_dir_ + "/release"; }

  // Scans the release directory: no file may reproduce an original row
  // unless that row has a zero-distance original neighbor, and no release
  // JSON may carry ECAP values or per-row distances.
  void release_safety_scan();

 private:
  Schema schema_;
  PipelineConfig config_;
  std::string out_dir_;

  Dataset training_data();     // post-split training rows
  Dataset pre_noise_synth();   // filtered if available, else raw synthetic
  Dataset release_synth();

  std::uint64_t stage_seed(std::string_view stage) const;
  void record_stage(const std::string& stage, double elapsed_ms,
                    const std::vector<std::string>& outputs);
  void write_manifest_entry(const std::string& key, const nlohmann::json& value);
};

std::uint64_t config_hash(const nlohmann::json& canonical);

}  // namespace synthguard
