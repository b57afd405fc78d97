#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sidlab/decode.hpp"
#include "sidlab/evalkit.hpp"

namespace sidlab {

struct WorldParams {
  int n_objects = 12;
  double sparsity = 0.7;
  int n_scenes = 200;
  int objects_per_scene = 3;
  std::string scenes_file;  // JSONL; replaces generated scenes when set
};

struct EvalParams {
  std::vector<PopeSetting> settings = {PopeSetting::kAdversarial};
  int probes_per_polarity = 3;
  bool use_cache = true;
};

struct SweepParams {
  std::vector<Strategy> strategies = {Strategy::kSid, Strategy::kVcd};
  std::vector<double> alpha = {0.1, 0.5, 1.0, 2.0};
  std::vector<double> beta = {0.0, 0.1, 0.5, 1.0};
  std::vector<int> layer_i = {3};
  std::vector<double> keep_ratio = {0.1};
};

struct BenchParams {
  int n_scenes = 20;
  bool wall_time = true;  // off gives byte-stable reports
};

struct InspectParams {
  int scene = 0;
  std::string object;  // empty: caption mode
};

struct JudgeParams {
  std::string template_file;  // empty: built-in template
  std::string model = "judge";
  double temperature = 0.0;
  int max_retries = 3;
  int backoff_ms = 250;
  int parallelism = 4;
  bool swap = true;
  double timeout_s = 60.0;
  int n_pairs = 20;
};

struct ExperimentConfig {
  nlohmann::json model = nlohmann::json::object();  // ModelConfig fields minus vocab
  WorldParams world;
  DecodeConfig decode;
  std::vector<Strategy> strategies = {Strategy::kNormal, Strategy::kSid};
  EvalParams eval;
  SweepParams sweep;
  BenchParams bench;
  InspectParams inspect;
  JudgeParams judge;
  std::string out = "out";
  std::uint64_t seed = 0;
  int workers = 1;
};

nlohmann::json default_config_json();
ExperimentConfig parse_config(const nlohmann::json& j);  // ConfigError

// Sets a dotted path. The path must already exist; the value is read as JSON
// and falls back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Loads the file (if any) over the defaults and applies overrides in order.
nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides);

struct Experiment {
  ExperimentConfig cfg;
  World world;
  std::vector<Scene> scenes;
  Model model;
};

Experiment build_experiment(const ExperimentConfig& cfg);
std::vector<DecodeConfig> strategy_configs(const ExperimentConfig& cfg);

// Entry point of the command-line tool. Returns the process exit code:
// 0 ok, 1 runtime failure, 2 bad config or usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sidlab
