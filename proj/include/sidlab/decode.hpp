#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sidlab/numerics.hpp"
#include "sidlab/seed.hpp"
#include "sidlab/toy_lvlm.hpp"

namespace sidlab {

enum class Strategy { kNormal, kVcd, kIcd, kVig, kSid, kSidTop, kSidRandom, kAdd };
enum class Picker { kGreedy, kSample };

std::string to_string(Strategy s);
std::string to_string(Picker p);
Strategy parse_strategy(const std::string& s);  // ConfigError
Picker parse_picker(const std::string& s);

bool is_contrastive(Strategy s);  // everything except NORMAL and ADD
bool uses_selection(Strategy s);  // SID family and ADD

struct DecodeConfig {
  Strategy strategy = Strategy::kNormal;
  Picker base_picker = Picker::kGreedy;
  double alpha = 1.0;
  double beta = 0.1;
  int layer_i = 3;
  double keep_ratio = 0.10;
  double temperature = 1.0;
  std::optional<int> top_k;
  std::optional<double> top_p;
  int max_new_tokens = 8;
  std::uint64_t seed = 0;
  double disturb_scale = 1.0;  // Gaussian σ_d as a multiple of the vision embedding RMS
  std::vector<int> negative_prefix = {kConfuse, kConfuse};
  bool redisturb_per_step = false;

  void validate(const ModelConfig& model) const;  // ConfigError
  bool operator==(const DecodeConfig&) const = default;
};

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

struct StepDiagnostics {
  int step = 0;
  int token = 0;
  Vector original_logits;
  std::optional<Vector> disturbed_logits;
  std::optional<std::vector<int>> kept_vision;
  std::optional<Vector> importance;
  int admissible_size = 0;
  std::vector<std::int64_t> pass_macs;
};

nlohmann::json to_json(const StepDiagnostics& d);
std::string to_jsonl(const std::vector<StepDiagnostics>& steps);

// One forward pass as seen by the decoder. last_rows[layer][head] is the
// final-row attention indexed by stream position (0 where pruned).
struct PassOutput {
  Vector logits;
  std::vector<std::vector<Vector>> last_rows;
  std::int64_t mac_count = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const Model& model() const = 0;
  virtual PassOutput full(const TokenStream& stream) = 0;
  virtual PassOutput from_layer(const TokenStream& stream, int layer_i, const std::vector<int>& kept) = 0;
};

// Plain, uncached forward passes.
class ReferenceBackend : public Backend {
 public:
  explicit ReferenceBackend(const Model& model) : model_(model) {}
  const Model& model() const override { return model_; }
  PassOutput full(const TokenStream& stream) override;
  PassOutput from_layer(const TokenStream& stream, int layer_i, const std::vector<int>& kept) override;

 private:
  const Model& model_;
};

PassOutput to_pass_output(const ForwardResult& r, std::size_t stream_size);

int greedy_next(const Vector& logits);  // ties: smallest id; -inf entries never win
int sample_next(const Vector& logits, double temperature, std::optional<int> top_k,
                std::optional<double> top_p, Rng& rng);

std::vector<int> plausibility_set(const Vector& original_probs, double beta);
Vector contrastive_combine(const Vector& logit_orig, const Vector& logit_dist, double alpha);
Vector additive_combine(const Vector& logit_orig, const Vector& logit_enhanced, double alpha);

struct StepResult {
  int token = 0;
  StepDiagnostics diagnostics;
};

StepResult decode_step(Backend& backend, const TokenStream& stream, const DecodeConfig& config);
StepResult decode_step(const Model& model, const TokenStream& stream, const DecodeConfig& config);

struct Generation {
  std::vector<int> tokens;  // includes the terminating EOS when emitted
  std::vector<StepDiagnostics> steps;
};

Generation generate(Backend& backend, const TokenStream& initial, const DecodeConfig& config);
Generation generate(const Model& model, const TokenStream& initial, const DecodeConfig& config);

// The disturbed stream a strategy contrasts against (VCD/ICD/VIG only).
TokenStream disturbed_stream(const TokenStream& stream, const DecodeConfig& config,
                             const Vocabulary& vocab);

}  // namespace sidlab
