#include "sidlab/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sidlab/disturb.hpp"
#include "sidlab/errors.hpp"
#include "sidlab/token_select.hpp"

namespace sidlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct StrategyName {
  Strategy s;
  const char* name;
};
constexpr StrategyName kStrategies[] = {
    {Strategy::kNormal, "NORMAL"}, {Strategy::kVcd, "VCD"},       {Strategy::kIcd, "ICD"},
    {Strategy::kVig, "VIG"},       {Strategy::kSid, "SID"},       {Strategy::kSidTop, "SID_TOP"},
    {Strategy::kSidRandom, "SID_RANDOM"}, {Strategy::kAdd, "ADD"},
};

int generated_count(const TokenStream& s) {
  int n = 0;
  for (const auto& e : s.entries())
    if (e.role == Role::kGenerated) ++n;
  return n;
}

}  // namespace

std::string to_string(Strategy s) {
  for (const auto& e : kStrategies)
    if (e.s == s) return e.name;
  return "?";
}

std::string to_string(Picker p) { return p == Picker::kGreedy ? "GREEDY" : "SAMPLE"; }

Strategy parse_strategy(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  std::replace(u.begin(), u.end(), '-', '_');
  for (const auto& e : kStrategies)
    if (u == e.name) return e.s;
  throw ConfigError("unknown strategy: " + s);
}

Picker parse_picker(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  if (u == "GREEDY") return Picker::kGreedy;
  if (u == "SAMPLE") return Picker::kSample;
  throw ConfigError("unknown picker: " + s);
}

bool is_contrastive(Strategy s) { return s != Strategy::kNormal && s != Strategy::kAdd; }

bool uses_selection(Strategy s) {
  return s == Strategy::kSid || s == Strategy::kSidTop || s == Strategy::kSidRandom || s == Strategy::kAdd;
}

void DecodeConfig::validate(const ModelConfig& model) const {
  auto fail = [](const std::string& m) { throw ConfigError("decode config: " + m); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
  if (strategy == Strategy::kAdd && alpha > 1.0) fail("ADD requires alpha in [0,1]");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0,1]");
  if (uses_selection(strategy)) {
    if (layer_i < 1 || layer_i > model.num_layers) fail("layer_i must lie in [1, num_layers]");
    if (!(keep_ratio >= 0.0 && keep_ratio <= 1.0)) fail("keep_ratio must lie in [0,1]");
  }
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (top_k && *top_k < 1) fail("top_k must be positive");
  if (top_p && !(*top_p > 0.0 && *top_p <= 1.0)) fail("top_p must lie in (0,1]");
  if (max_new_tokens < 0) fail("max_new_tokens must be >= 0");
  if (strategy == Strategy::kVcd && !(disturb_scale > 0.0)) fail("disturb_scale must be > 0");
  for (int t : negative_prefix)
    if (t < 0 || t >= model.vocab.size() || model.vocab.size() == 0) fail("negative prefix token out of range");
}

void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = {{"strategy", to_string(c.strategy)},
       {"base_picker", to_string(c.base_picker)},
       {"alpha", c.alpha},
       {"beta", c.beta},
       {"layer_i", c.layer_i},
       {"keep_ratio", c.keep_ratio},
       {"temperature", c.temperature},
       {"top_k", c.top_k ? nlohmann::json(*c.top_k) : nlohmann::json(nullptr)},
       {"top_p", c.top_p ? nlohmann::json(*c.top_p) : nlohmann::json(nullptr)},
       {"max_new_tokens", c.max_new_tokens},
       {"seed", c.seed},
       {"disturb_scale", c.disturb_scale},
       {"negative_prefix", c.negative_prefix},
       {"redisturb_per_step", c.redisturb_per_step}};
}

void from_json(const nlohmann::json& j, DecodeConfig& c) {
  static const char* known[] = {"strategy",    "base_picker", "alpha",          "beta",
                                "layer_i",     "keep_ratio",  "temperature",    "top_k",
                                "top_p",       "max_new_tokens", "seed",        "disturb_scale",
                                "negative_prefix", "redisturb_per_step"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown decode field: " + it.key());
  }
  DecodeConfig d;
  c.strategy = j.contains("strategy") ? parse_strategy(j.at("strategy").get<std::string>()) : d.strategy;
  c.base_picker = j.contains("base_picker") ? parse_picker(j.at("base_picker").get<std::string>()) : d.base_picker;
  c.alpha = j.value("alpha", d.alpha);
  c.beta = j.value("beta", d.beta);
  c.layer_i = j.value("layer_i", d.layer_i);
  c.keep_ratio = j.value("keep_ratio", d.keep_ratio);
  c.temperature = j.value("temperature", d.temperature);
  c.top_k = j.contains("top_k") && !j.at("top_k").is_null() ? std::optional<int>(j.at("top_k").get<int>())
                                                             : std::nullopt;
  c.top_p = j.contains("top_p") && !j.at("top_p").is_null()
                ? std::optional<double>(j.at("top_p").get<double>())
                : std::nullopt;
  c.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  c.seed = j.value("seed", d.seed);
  c.disturb_scale = j.value("disturb_scale", d.disturb_scale);
  c.negative_prefix = j.value("negative_prefix", d.negative_prefix);
  c.redisturb_per_step = j.value("redisturb_per_step", d.redisturb_per_step);
}

nlohmann::json to_json(const StepDiagnostics& d) {
  nlohmann::json j = {{"step", d.step},
                      {"token", d.token},
                      {"original_logits", d.original_logits},
                      {"admissible_size", d.admissible_size},
                      {"pass_macs", d.pass_macs}};
  if (d.disturbed_logits) j["disturbed_logits"] = *d.disturbed_logits;
  if (d.kept_vision) j["kept_vision"] = *d.kept_vision;
  if (d.importance) j["importance"] = *d.importance;
  return j;
}

std::string to_jsonl(const std::vector<StepDiagnostics>& steps) {
  std::string out;
  for (const auto& s : steps) out += to_json(s).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------- backends

PassOutput to_pass_output(const ForwardResult& r, std::size_t stream_size) {
  PassOutput out;
  out.logits = r.logits;
  out.mac_count = r.mac_count;
  out.last_rows.resize(r.trace.layers.size());
  for (std::size_t l = 0; l < r.trace.layers.size(); ++l) {
    const auto& la = r.trace.layers[l];
    const std::size_t last = la.tokens.size() - 1;
    for (const Matrix& a : la.heads) {
      Vector row(stream_size, 0.0);
      for (std::size_t j = 0; j < la.tokens.size(); ++j) row[la.tokens[j]] = a(last, j);
      out.last_rows[l].push_back(std::move(row));
    }
  }
  return out;
}

PassOutput ReferenceBackend::full(const TokenStream& stream) {
  return to_pass_output(model_.forward(stream), stream.size());
}

PassOutput ReferenceBackend::from_layer(const TokenStream& stream, int layer_i,
                                        const std::vector<int>& kept) {
  return to_pass_output(model_.forward_from_layer(stream, layer_i, kept), stream.size());
}

// ---------------------------------------------------------------- pickers

int greedy_next(const Vector& logits) {
  if (logits.empty()) throw DimensionError("greedy_next: empty logits");
  int best = -1;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isnan(logits[i])) throw NumericError("greedy_next: NaN logit");
    if (logits[i] == kNegInf) continue;
    if (best < 0 || logits[i] > logits[best]) best = static_cast<int>(i);
  }
  if (best < 0) throw SamplingError("greedy_next: every token is masked");
  return best;
}

int sample_next(const Vector& logits, double temperature, std::optional<int> top_k,
                std::optional<double> top_p, Rng& rng) {
  if (!(temperature > 0.0)) throw InputError("sample_next: temperature must be > 0");
  if (top_p && !(*top_p > 0.0 && *top_p <= 1.0)) throw InputError("sample_next: top_p must lie in (0,1]");
  if (top_k && *top_k < 1) throw InputError("sample_next: top_k must be positive");
  Vector scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    scaled[i] = logits[i] == kNegInf ? kNegInf : logits[i] / temperature;
  Vector p = masked_softmax(scaled);

  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
  std::size_t keep = order.size();
  if (top_k) keep = std::min<std::size_t>(keep, static_cast<std::size_t>(*top_k));
  double kept_mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept_mass += p[order[i]];
  if (top_p) {
    double cum = 0.0;
    std::size_t cut = keep;
    for (std::size_t i = 0; i < keep; ++i) {
      cum += p[order[i]] / kept_mass;
      if (cum >= *top_p - 1e-12) {
        cut = i + 1;
        break;
      }
    }
    keep = cut;
  }
  std::vector<char> allowed(p.size(), 0);
  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    allowed[order[i]] = 1;
    mass += p[order[i]];
  }
  if (!(mass > 0.0)) throw SamplingError("sample_next: empty support");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double target = u(rng) * mass;
  double cum = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!allowed[i] || p[i] == 0.0) continue;
    cum += p[i];
    last = static_cast<int>(i);
    if (target < cum) return last;
  }
  return last;
}

std::vector<int> plausibility_set(const Vector& original_probs, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("plausibility_set: beta must lie in [0,1]");
  if (original_probs.empty()) throw DimensionError("plausibility_set: empty distribution");
  const double mx = *std::max_element(original_probs.begin(), original_probs.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < original_probs.size(); ++i) {
    const double p = original_probs[i];
    if (p > 0.0 && p >= beta * mx) out.push_back(static_cast<int>(i));
  }
  return out;
}

Vector contrastive_combine(const Vector& logit_orig, const Vector& logit_dist, double alpha) {
  if (logit_orig.size() != logit_dist.size()) throw DimensionError("contrastive_combine: length mismatch");
  Vector out(logit_orig.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 + alpha) * logit_orig[i] - alpha * logit_dist[i];
  return out;
}

Vector additive_combine(const Vector& logit_orig, const Vector& logit_enhanced, double alpha) {
  if (logit_orig.size() != logit_enhanced.size()) throw DimensionError("additive_combine: length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("additive_combine: alpha must lie in [0,1]");
  Vector out(logit_orig.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - alpha) * logit_orig[i] + alpha * logit_enhanced[i];
  return out;
}

// ---------------------------------------------------------------- orchestration

TokenStream disturbed_stream(const TokenStream& stream, const DecodeConfig& config, const Vocabulary& vocab) {
  switch (config.strategy) {
    case Strategy::kVcd: {
      const double rms = vision_rms(stream);
      std::uint64_t seed = derive_seed(config.seed, "vcd");
      if (config.redisturb_per_step) seed = derive_seed(seed, "step", generated_count(stream));
      return gaussian_vision_disturb(stream, config.disturb_scale * rms, seed);
    }
    case Strategy::kIcd:
      return negative_instruction(stream, config.negative_prefix, vocab);
    case Strategy::kVig:
      return ablate_vision(stream);
    default:
      throw InputError("disturbed_stream: strategy " + to_string(config.strategy) + " has no disturbance");
  }
}

StepResult decode_step(Backend& backend, const TokenStream& stream, const DecodeConfig& config) {
  const Model& model = backend.model();
  config.validate(model.config());
  const int step = generated_count(stream);
  StepResult res;
  StepDiagnostics& diag = res.diagnostics;
  diag.step = step;

  PassOutput orig = backend.full(stream);
  diag.original_logits = orig.logits;
  diag.pass_macs.push_back(orig.mac_count);
  Rng pick_rng(derive_seed(config.seed, "pick", static_cast<std::uint64_t>(step)));

  auto pick = [&](const Vector& logits) {
    return config.base_picker == Picker::kGreedy
               ? greedy_next(logits)
               : sample_next(logits, config.temperature, config.top_k, config.top_p, pick_rng);
  };

  if (config.strategy == Strategy::kNormal) {
    diag.admissible_size = static_cast<int>(orig.logits.size());
    res.token = pick(orig.logits);
    diag.token = res.token;
    return res;
  }

  PassOutput other;
  if (uses_selection(config.strategy)) {
    const std::vector<int> vis = stream.vision_indices();
    if (config.layer_i > static_cast<int>(orig.last_rows.size()))
      throw InputError("decode_step: layer_i beyond trace");
    ImportanceScores scores = vision_importance(orig.last_rows[config.layer_i - 1], config.layer_i, vis);
    std::vector<int> kept;
    switch (config.strategy) {
      case Strategy::kSid:
        kept = select_least(scores, config.keep_ratio);
        break;
      case Strategy::kSidTop:
      case Strategy::kAdd:
        kept = select_top(scores, config.keep_ratio);
        break;
      default:
        kept = select_random(vis.size(), config.keep_ratio,
                             derive_seed(config.seed, "sid_random", static_cast<std::uint64_t>(step)));
        break;
    }
    for (int& k : kept) k = vis[k];
    other = backend.from_layer(stream, config.layer_i, kept);
    diag.importance = scores.scores;
    diag.kept_vision = kept;
  } else {
    other = backend.full(disturbed_stream(stream, config, model.vocab()));
  }
  diag.disturbed_logits = other.logits;
  diag.pass_macs.push_back(other.mac_count);

  const Vector probs = softmax(orig.logits);
  const std::vector<int> admissible = plausibility_set(probs, config.beta);
  diag.admissible_size = static_cast<int>(admissible.size());
  const Vector combined = config.strategy == Strategy::kAdd
                              ? additive_combine(orig.logits, other.logits, config.alpha)
                              : contrastive_combine(orig.logits, other.logits, config.alpha);
  Vector masked(combined.size(), kNegInf);
  for (int i : admissible) masked[i] = combined[i];
  res.token = pick(masked);
  diag.token = res.token;
  return res;
}

StepResult decode_step(const Model& model, const TokenStream& stream, const DecodeConfig& config) {
  ReferenceBackend b(model);
  return decode_step(b, stream, config);
}

Generation generate(Backend& backend, const TokenStream& initial, const DecodeConfig& config) {
  config.validate(backend.model().config());
  Generation g;
  TokenStream stream = initial;
  for (int t = 0; t < config.max_new_tokens; ++t) {
    StepResult r = decode_step(backend, stream, config);
    g.tokens.push_back(r.token);
    g.steps.push_back(std::move(r.diagnostics));
    if (r.token == kEos) break;
    stream.append_generated(r.token);
  }
  return g;
}

Generation generate(const Model& model, const TokenStream& initial, const DecodeConfig& config) {
  ReferenceBackend b(model);
  return generate(b, initial, config);
}

}  // namespace sidlab
