#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sidlab/decode.hpp"
#include "sidlab/toy_lvlm.hpp"

namespace sidlab {

struct World {
  Vocabulary vocab;
  Vector popularity;  // positive, sums to 1
  std::uint64_t seed = 0;
};

World gen_world(int n_objects, double cooccurrence_sparsity, std::uint64_t seed);
std::vector<Scene> gen_scenes(const World& world, int n_scenes, int objects_per_scene, std::uint64_t seed);

enum class PopeSetting { kRandom, kPopular, kAdversarial };
std::string to_string(PopeSetting s);
PopeSetting parse_setting(const std::string& s);  // ConfigError

struct PopeProbe {
  int scene_id = 0;
  int object = 0;
  bool truth = false;
  PopeSetting setting = PopeSetting::kRandom;
};

// k YES probes followed by k NO probes.
std::vector<PopeProbe> build_pope_probes(const World& world, const Scene& scene, PopeSetting setting,
                                         int k_per_polarity, std::uint64_t seed);

// Largest P[p, o] over present p.
double max_cooccurrence(const World& world, const Scene& scene, int object);

struct PopeResult {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  int n_probes() const { return tp + fp + tn + fn; }
};

PopeResult pope_metrics(const std::vector<bool>& predictions, const std::vector<PopeProbe>& probes);
PopeResult pope_from_counts(int tp, int fp, int tn, int fn);

struct ChairResult {
  double chair_s = 0;
  double chair_i = 0;
  std::vector<int> hallucinated;  // per caption
  std::vector<int> mentioned;     // per caption
};

ChairResult chair_metrics(const std::vector<std::vector<std::string>>& captions,
                          const std::vector<std::vector<std::string>>& truths);

// ---- evaluation runs

struct PopeRow {
  PopeSetting setting = PopeSetting::kRandom;
  DecodeConfig decode;
  std::uint64_t seed = 0;
  PopeResult result;
};

struct ChairRow {
  DecodeConfig decode;
  std::uint64_t seed = 0;
  ChairResult result;
  int n_captions = 0;
  double mean_len = 0;
};

struct EvalOptions {
  int probes_per_polarity = 3;
  int workers = 1;
  bool use_cache = true;  // prefix-cached backend; results match the reference path
};

// One row per config. Decode seeds derive from `seed` and the scene id, so the
// worker count never changes results.
std::vector<PopeRow> eval_pope(const Model& model, const World& world, const std::vector<Scene>& scenes,
                               PopeSetting setting, const std::vector<DecodeConfig>& configs,
                               std::uint64_t seed, const EvalOptions& opt = {});

struct Caption {
  int scene_id = 0;
  std::vector<int> tokens;
};

std::vector<ChairRow> eval_chair(const Model& model, const World& world, const std::vector<Scene>& scenes,
                                 const std::vector<DecodeConfig>& configs, std::uint64_t seed,
                                 const EvalOptions& opt = {},
                                 std::vector<std::vector<Caption>>* captions = nullptr);

std::vector<std::string> caption_objects(const Vocabulary& vocab, const std::vector<int>& tokens);

struct EfficiencyEntry {
  std::string strategy;
  std::int64_t mac_total = 0;
  double mac_ratio = 0;
  double wall_ms = 0;
  int tokens = 0;
};

struct EfficiencyProfile {
  std::vector<EfficiencyEntry> entries;
};

// Every config decodes the same replayed caption prefixes (taken from NORMAL
// greedy captions) through the reference path.
EfficiencyProfile efficiency_profile(const Model& model, const std::vector<Scene>& scenes,
                                     const std::vector<DecodeConfig>& configs);

// ---- reports

enum class ReportFormat { kCsv, kJson };

extern const std::vector<std::string> kPopeColumns;
extern const std::vector<std::string> kChairColumns;

void write_report(const std::vector<PopeRow>& rows, const std::string& path, ReportFormat fmt);
void write_report(const std::vector<ChairRow>& rows, const std::string& path, ReportFormat fmt);
void write_report(const EfficiencyProfile& profile, const std::string& path, ReportFormat fmt);

std::vector<PopeRow> read_pope_csv(const std::string& path);
std::vector<ChairRow> read_chair_csv(const std::string& path);
EfficiencyProfile read_efficiency_json(const std::string& path);

void write_scenes_jsonl(const World& world, const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> read_scenes_jsonl(const World& world, const std::string& path);

nlohmann::json efficiency_schema();
bool validate_efficiency_json(const nlohmann::json& j, std::string* why = nullptr);

}  // namespace sidlab
