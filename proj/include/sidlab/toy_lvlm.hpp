#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sidlab/numerics.hpp"

namespace sidlab {

// Control tokens occupy the first ids; object words follow in order.
enum ControlToken : int {
  kBos = 0,
  kEos = 1,
  kYes = 2,
  kNo = 3,
  kQuery = 4,
  kDescribe = 5,
  kConfuse = 6,
  kNumControl = 7,
};

const char* control_name(int token);

class Vocabulary {
 public:
  Vocabulary() = default;
  // P must be square, row-stochastic with a zero diagonal.
  Vocabulary(std::vector<std::string> objects, Matrix cooccurrence);

  int size() const { return kNumControl + static_cast<int>(objects_.size()); }
  int n_objects() const { return static_cast<int>(objects_.size()); }
  const std::vector<std::string>& objects() const { return objects_; }
  const Matrix& cooccurrence() const { return p_; }

  int object_token(int object) const;
  bool is_object_token(int token) const { return token >= kNumControl && token < size(); }
  int object_of(int token) const;  // inverse of object_token
  int token_of(const std::string& name) const;  // VocabularyError if unknown
  std::string token_name(int token) const;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> objects_;
  Matrix p_;
};

// Extra construction knobs of the simulator. Defaults are the shipped values.
struct AttentionKnobs {
  double gain = 7.0;             // identity alignment of vision keys/queries
  double cooccur_query = 1.2;    // co-occurrence mixing in object queries
  double role_gain_first = 9.5;  // text-text affinity in layer 1
  double role_gain = 2.0;        // text-text affinity afterwards
  double scan_gain = 13.0;       // control-token queries looking at vision
  double scan_gain_generated = 4.0;
  double query_gain_generated = 0.5;  // content query of generated rows
  double position_gain = 4.0;
  double omega = 0.05;           // base rotary frequency
  double assoc_vision = 0.4;     // weight of seen objects in the prior head
  double assoc_text = 4.2;       // weight of text context in the prior head
  double norm_eps = 1e-2;
  double mask_penalty = 1000.0;  // logit offset for impossible tokens

  bool operator==(const AttentionKnobs&) const = default;
};

struct ModelConfig {
  int num_layers = 6;
  int num_heads = 4;
  int d_model = 64;
  int n_vision = 32;
  Vocabulary vocab;
  double noise_scale = 0.05;
  double prior_strength = 2.0;
  double evidence_gain = 8.0;
  double answer_threshold = 0.5;
  std::uint64_t seed = 0;
  AttentionKnobs knobs;

  int head_dim() const { return d_model / num_heads; }
  int code_dim() const { return head_dim() - 4; }
  void validate() const;  // throws ConfigError

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const Vocabulary& v);
void from_json(const nlohmann::json& j, Vocabulary& v);
void to_json(nlohmann::json& j, const AttentionKnobs& k);
void from_json(const nlohmann::json& j, AttentionKnobs& k);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class Role { kVision, kInstruction, kGenerated };

struct StreamEntry {
  int token = 0;
  Role role = Role::kInstruction;
  int position = 0;
  Vector embedding;  // vision only, length d_model

  bool operator==(const StreamEntry&) const = default;
};

class TokenStream {
 public:
  TokenStream() = default;
  explicit TokenStream(std::vector<StreamEntry> entries);

  static TokenStream build(const std::vector<Vector>& vision, const std::vector<int>& instruction,
                           const std::vector<int>& generated = {});

  void append_generated(int token);
  void validate() const;  // InputError on broken ordering

  const std::vector<StreamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const StreamEntry& operator[](std::size_t i) const { return entries_[i]; }
  int n_vision() const;
  std::vector<int> vision_indices() const;
  std::vector<int> generated_tokens() const;

  bool operator==(const TokenStream&) const = default;

 private:
  std::vector<StreamEntry> entries_;
};

struct Scene {
  int id = 0;
  std::vector<int> present;  // object indices, distinct

  bool operator==(const Scene&) const = default;
};

// Attention of one layer. For a full pass `tokens` lists every stream index;
// after vision pruning it lists only the survivors, and the matrices are
// indexed over that reduced set.
struct LayerAttention {
  std::vector<int> tokens;
  std::vector<Matrix> heads;
};

struct AttentionTrace {
  std::vector<LayerAttention> layers;
};

struct ForwardResult {
  Vector logits;
  AttentionTrace trace;
  std::int64_t mac_count = 0;
};

// What the readout saw on the final row. Exposed for tests and inspection.
struct Readout {
  Vector perception;  // per object
  Vector context;     // per object
  double vision_mass = 0.0;
};

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return cfg_.vocab; }
  const Matrix& codes() const { return codes_; }  // n_objects x code_dim
  std::string weight_digest() const;

  ForwardResult forward(const TokenStream& stream) const;
  ForwardResult forward_from_layer(const TokenStream& stream, int layer_i,
                                   const std::vector<int>& kept_vision) const;

  // Logits from a final-row readout; shared by every execution path.
  Vector head_logits(const TokenStream& stream, const Readout& r) const;

  // Analytic MAC count of a pass: layers up to `layer_i` (1-based, inclusive)
  // see `n` tokens, later layers see `n - n_vision + kept`. Layer 1 attends
  // within each modality only (vision to vision, text to text).
  std::int64_t count_macs(int n, int n_vision, int layer_i, int kept) const;

  struct HeadWeights {
    Matrix wq[3], wk[3], wv[3];  // indexed by Role
  };
  struct LayerWeights {
    std::vector<HeadWeights> heads;
  };
  const std::vector<LayerWeights>& layers() const { return layers_; }

  // Input features of one stream entry (embedding + role + position).
  Vector input_features(const StreamEntry& e) const;
  // Copy of x with the context block replaced by its eps-normalized value.
  Vector normalized(const double* x) const;
  int ctx_offset() const;

 private:
  ForwardResult run(const TokenStream& stream, int layer_i,
                    const std::vector<int>* kept_vision) const;

  ModelConfig cfg_;
  Matrix codes_;
  std::vector<LayerWeights> layers_;
};

Model build_model(const ModelConfig& config);

// One token per ⌊n/|present|⌋ or ⌈·⌉ slot, round-robin; identity block carries
// the object's code plus σ_e noise seeded from (model seed, scene id).
std::vector<Vector> embed_scene(const Scene& scene, const Model& model);

ForwardResult forward_step(const Model& model, const TokenStream& stream);
ForwardResult forward_from_layer(const Model& model, const TokenStream& stream, int layer_i,
                                 const std::vector<int>& kept_vision);

// κ·P[last, ·] on object entries, uniform κ/|objects| without a last object,
// zero on control tokens.
Vector prior_logits(const Model& model, std::optional<int> last_object);

// Streams for the two task formats.
TokenStream query_stream(const Model& model, const std::vector<Vector>& vision, int object);
TokenStream caption_stream(const std::vector<Vector>& vision);

}  // namespace sidlab
