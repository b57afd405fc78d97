#include "sidlab/toy_lvlm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "sidlab/errors.hpp"
#include "sidlab/seed.hpp"

namespace sidlab {

namespace {

constexpr const char* kControlNames[kNumControl] = {"BOS",   "EOS",      "YES",    "NO",
                                                    "QUERY", "DESCRIBE", "CONFUSE"};

int role_index(Role r) { return static_cast<int>(r); }

// Rows of a seeded Gaussian matrix, orthonormalized when they fit.
Matrix make_codes(int n, int dc, std::uint64_t seed) {
  Rng rng = make_rng(seed, "codes");
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix c(n, dc);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dc; ++j) c(i, j) = nd(rng);
  for (int i = 0; i < n; ++i) {
    if (i < dc) {
      for (int k = 0; k < i; ++k) {
        double dot = 0.0;
        for (int j = 0; j < dc; ++j) dot += c(i, j) * c(k, j);
        for (int j = 0; j < dc; ++j) c(i, j) -= dot * c(k, j);
      }
    }
    double nrm = 0.0;
    for (int j = 0; j < dc; ++j) nrm += c(i, j) * c(i, j);
    nrm = std::sqrt(nrm);
    for (int j = 0; j < dc; ++j) c(i, j) /= nrm;
  }
  return c;
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void hash_matrix(std::uint64_t& h, const Matrix& m) {
  hash_bytes(h, m.data().data(), m.data().size() * sizeof(double));
}

}  // namespace

const char* control_name(int token) {
  if (token < 0 || token >= kNumControl) return "?";
  return kControlNames[token];
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> objects, Matrix cooccurrence)
    : objects_(std::move(objects)), p_(std::move(cooccurrence)) {
  const std::size_t n = objects_.size();
  if (n < 2) throw VocabularyError("vocabulary needs at least two objects");
  std::set<std::string> seen;
  for (const auto& o : objects_) {
    if (o.empty()) throw VocabularyError("empty object name");
    for (int c = 0; c < kNumControl; ++c)
      if (o == kControlNames[c]) throw VocabularyError("object name clashes with control token: " + o);
    if (!seen.insert(o).second) throw VocabularyError("duplicate object name: " + o);
  }
  if (p_.rows() != n || p_.cols() != n)
    throw VocabularyError("co-occurrence matrix must be " + std::to_string(n) + "x" +
                          std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double v = p_(i, j);
      if (!std::isfinite(v) || v < 0.0) throw VocabularyError("co-occurrence entries must be >= 0");
      s += v;
    }
    if (p_(i, i) != 0.0) throw VocabularyError("co-occurrence diagonal must be zero");
    if (std::abs(s - 1.0) > 1e-9)
      throw VocabularyError("co-occurrence row " + std::to_string(i) + " does not sum to 1");
  }
}

int Vocabulary::object_token(int object) const {
  if (object < 0 || object >= n_objects())
    throw VocabularyError("object index out of range: " + std::to_string(object));
  return kNumControl + object;
}

int Vocabulary::object_of(int token) const {
  if (!is_object_token(token)) throw VocabularyError("not an object token: " + std::to_string(token));
  return token - kNumControl;
}

int Vocabulary::token_of(const std::string& name) const {
  for (int c = 0; c < kNumControl; ++c)
    if (name == kControlNames[c]) return c;
  for (int i = 0; i < n_objects(); ++i)
    if (objects_[i] == name) return kNumControl + i;
  throw VocabularyError("unknown token: " + name);
}

std::string Vocabulary::token_name(int token) const {
  if (token >= 0 && token < kNumControl) return kControlNames[token];
  if (is_object_token(token)) return objects_[token - kNumControl];
  throw VocabularyError("unknown token id: " + std::to_string(token));
}

// ---------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const Vocabulary& v) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < v.cooccurrence().rows(); ++i) {
    std::vector<double> r(v.cooccurrence().row(i), v.cooccurrence().row(i) + v.cooccurrence().cols());
    rows.push_back(r);
  }
  j = {{"objects", v.objects()}, {"cooccurrence", rows}};
}

void from_json(const nlohmann::json& j, Vocabulary& v) {
  auto objects = j.at("objects").get<std::vector<std::string>>();
  auto rows = j.at("cooccurrence").get<std::vector<std::vector<double>>>();
  Matrix p(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != p.cols()) throw VocabularyError("ragged co-occurrence matrix");
    for (std::size_t k = 0; k < rows[i].size(); ++k) p(i, k) = rows[i][k];
  }
  v = Vocabulary(std::move(objects), std::move(p));
}

void to_json(nlohmann::json& j, const AttentionKnobs& k) {
  j = {{"gain", k.gain},
       {"cooccur_query", k.cooccur_query},
       {"role_gain_first", k.role_gain_first},
       {"role_gain", k.role_gain},
       {"scan_gain", k.scan_gain},
       {"scan_gain_generated", k.scan_gain_generated},
       {"query_gain_generated", k.query_gain_generated},
       {"position_gain", k.position_gain},
       {"omega", k.omega},
       {"assoc_vision", k.assoc_vision},
       {"assoc_text", k.assoc_text},
       {"norm_eps", k.norm_eps},
       {"mask_penalty", k.mask_penalty}};
}

void from_json(const nlohmann::json& j, AttentionKnobs& k) {
  AttentionKnobs d;
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::set<std::string> known = {
        "gain",       "cooccur_query", "role_gain_first", "role_gain", "scan_gain",   "scan_gain_generated", "query_gain_generated", "position_gain",
        "omega",      "assoc_vision",  "assoc_text",      "norm_eps",  "mask_penalty"};
    if (!known.count(it.key())) throw ConfigError("unknown model knob: " + it.key());
  }
  k.gain = j.value("gain", d.gain);
  k.cooccur_query = j.value("cooccur_query", d.cooccur_query);
  k.role_gain_first = j.value("role_gain_first", d.role_gain_first);
  k.role_gain = j.value("role_gain", d.role_gain);
  k.scan_gain = j.value("scan_gain", d.scan_gain);
  k.scan_gain_generated = j.value("scan_gain_generated", d.scan_gain_generated);
  k.query_gain_generated = j.value("query_gain_generated", d.query_gain_generated);
  k.position_gain = j.value("position_gain", d.position_gain);
  k.omega = j.value("omega", d.omega);
  k.assoc_vision = j.value("assoc_vision", d.assoc_vision);
  k.assoc_text = j.value("assoc_text", d.assoc_text);
  k.norm_eps = j.value("norm_eps", d.norm_eps);
  k.mask_penalty = j.value("mask_penalty", d.mask_penalty);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"num_layers", c.num_layers},
       {"num_heads", c.num_heads},
       {"d_model", c.d_model},
       {"n_vision", c.n_vision},
       {"noise_scale", c.noise_scale},
       {"prior_strength", c.prior_strength},
       {"evidence_gain", c.evidence_gain},
       {"answer_threshold", c.answer_threshold},
       {"seed", c.seed},
       {"knobs", c.knobs}};
  if (c.vocab.n_objects() > 0) j["vocab"] = c.vocab;
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known = {
      "num_layers",     "num_heads",     "d_model",          "n_vision", "vocab", "noise_scale",
      "prior_strength", "evidence_gain", "answer_threshold", "seed",     "knobs"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown model field: " + it.key());
  ModelConfig d;
  c.num_layers = j.value("num_layers", d.num_layers);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.d_model = j.value("d_model", d.d_model);
  c.n_vision = j.value("n_vision", d.n_vision);
  c.noise_scale = j.value("noise_scale", d.noise_scale);
  c.prior_strength = j.value("prior_strength", d.prior_strength);
  c.evidence_gain = j.value("evidence_gain", d.evidence_gain);
  c.answer_threshold = j.value("answer_threshold", d.answer_threshold);
  c.seed = j.value("seed", d.seed);
  c.knobs = j.contains("knobs") ? j.at("knobs").get<AttentionKnobs>() : AttentionKnobs{};
  c.vocab = j.contains("vocab") ? j.at("vocab").get<Vocabulary>() : Vocabulary{};
}

// ---------------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (num_layers < 2) fail("num_layers must be >= 2");
  if (num_heads < 1) fail("num_heads must be >= 1");
  if (d_model < 1 || d_model % num_heads != 0) fail("d_model must be a positive multiple of num_heads");
  if (code_dim() < 1) fail("head dimension must exceed 4");
  if (2 * code_dim() + 4 + 2 * num_heads > d_model) fail("d_model too small for the block layout");
  if (n_vision < 1) fail("n_vision must be positive");
  if (!(noise_scale >= 0.0)) fail("noise_scale must be >= 0");
  if (!(prior_strength >= 0.0)) fail("prior_strength must be >= 0");
  if (!(evidence_gain > 0.0)) fail("evidence_gain must be > 0");
  if (!(answer_threshold > 0.0 && answer_threshold < 1.0)) fail("answer_threshold must lie in (0,1)");
  if (vocab.n_objects() < 2) fail("vocabulary has no objects");
  if (!(knobs.norm_eps > 0.0)) fail("norm_eps must be > 0");
  if (!(knobs.scan_gain > 0.0)) fail("scan_gain must be > 0");
  if (!(knobs.mask_penalty > 0.0)) fail("mask_penalty must be > 0");
}

// ---------------------------------------------------------------- TokenStream

TokenStream::TokenStream(std::vector<StreamEntry> entries) : entries_(std::move(entries)) {
  validate();
}

TokenStream TokenStream::build(const std::vector<Vector>& vision, const std::vector<int>& instruction,
                               const std::vector<int>& generated) {
  std::vector<StreamEntry> e;
  e.reserve(vision.size() + instruction.size() + generated.size());
  int pos = 0;
  for (const auto& v : vision) e.push_back({-1, Role::kVision, pos++, v});
  for (int t : instruction) e.push_back({t, Role::kInstruction, pos++, {}});
  for (int t : generated) e.push_back({t, Role::kGenerated, pos++, {}});
  return TokenStream(std::move(e));
}

void TokenStream::append_generated(int token) {
  int pos = entries_.empty() ? 0 : entries_.back().position + 1;
  entries_.push_back({token, Role::kGenerated, pos, {}});
}

void TokenStream::validate() const {
  int stage = 0;  // 0 vision, 1 instruction, 2 generated
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    int s = role_index(e.role);
    if (s < stage) throw InputError("token stream roles out of order at index " + std::to_string(i));
    stage = s;
    if (i == 0 ? e.position != 0 : e.position <= entries_[i - 1].position)
      throw InputError("token stream positions must increase from 0");
    if (e.role == Role::kVision && e.embedding.empty())
      throw InputError("vision entry without embedding at index " + std::to_string(i));
  }
}

int TokenStream::n_vision() const {
  int n = 0;
  for (const auto& e : entries_)
    if (e.role == Role::kVision) ++n;
  return n;
}

std::vector<int> TokenStream::vision_indices() const {
  std::vector<int> v;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].role == Role::kVision) v.push_back(static_cast<int>(i));
  return v;
}

std::vector<int> TokenStream::generated_tokens() const {
  std::vector<int> v;
  for (const auto& e : entries_)
    if (e.role == Role::kGenerated) v.push_back(e.token);
  return v;
}

// ---------------------------------------------------------------- Model

Model::Model(ModelConfig config) : cfg_(std::move(config)) {
  cfg_.validate();
  const int dc = cfg_.code_dim();
  const int dh = cfg_.head_dim();
  const int D = cfg_.d_model;
  const int H = cfg_.num_heads;
  const int n_obj = cfg_.vocab.n_objects();
  const auto& k = cfg_.knobs;
  codes_ = make_codes(n_obj, dc, cfg_.seed);

  // Symmetrized co-occurrence lifted into code space: C^T Psym C.
  const Matrix& p = cfg_.vocab.cooccurrence();
  Matrix pc(dc, dc);
  for (int a = 0; a < n_obj; ++a)
    for (int b = 0; b < n_obj; ++b) {
      double s = 0.5 * (p(a, b) + p(b, a));
      if (s == 0.0) continue;
      for (int i = 0; i < dc; ++i)
        for (int j = 0; j < dc; ++j) pc(i, j) += codes_(a, i) * s * codes_(b, j);
    }

  const int role_vis = dc, role_text = dc + 1, role_ctrl = dc + 2, role_gen = dc + 3;
  const int pos_base = dc + 4;
  const int ctx = ctx_offset();
  const int h_text = dc, h_pos = dc + 1, h_scan = dc + 3;
  const double pert = cfg_.noise_scale / std::sqrt(static_cast<double>(dc));

  layers_.resize(cfg_.num_layers);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const double rb = l == 0 ? k.role_gain_first : k.role_gain;
    layers_[l].heads.resize(H);
    for (int h = 0; h < H; ++h) {
      HeadWeights& w = layers_[l].heads[h];
      for (int r = 0; r < 3; ++r) {
        w.wq[r] = Matrix(D, dh);
        w.wk[r] = Matrix(D, dh);
        w.wv[r] = Matrix(D, dh);
      }
      Rng rq(derive_seed(cfg_.seed, "wq", static_cast<std::uint64_t>(l * H + h)));
      Rng rk(derive_seed(cfg_.seed, "wk", static_cast<std::uint64_t>(l * H + h)));
      std::normal_distribution<double> nd(0.0, 1.0);
      Matrix pq(dc, dc), pk(dc, dc);
      for (int i = 0; i < dc; ++i)
        for (int j = 0; j < dc; ++j) {
          pq(i, j) = pert * nd(rq);
          pk(i, j) = pert * nd(rk);
        }
      const int vis = role_index(Role::kVision);
      const int ins = role_index(Role::kInstruction);
      const int gen = role_index(Role::kGenerated);
      for (int i = 0; i < dc; ++i)
        for (int j = 0; j < dc; ++j) {
          const double eye = i == j ? 1.0 : 0.0;
          w.wq[vis](i, j) = k.gain * eye + pq(i, j);
          w.wq[ins](i, j) = k.gain * (eye + k.cooccur_query * pc(i, j)) + pq(i, j);
          w.wq[gen](i, j) = k.query_gain_generated * (eye + k.cooccur_query * pc(i, j));
          w.wk[vis](i, j) = k.gain * eye + pk(i, j);
        }
      for (int r = 0; r < 3; ++r) {
        w.wq[r](pos_base + 2 * h, h_pos) = k.position_gain;
        w.wq[r](pos_base + 2 * h + 1, h_pos + 1) = k.position_gain;
        w.wk[r](pos_base + 2 * h, h_pos) = k.position_gain;
        w.wk[r](pos_base + 2 * h + 1, h_pos + 1) = k.position_gain;
      }
      w.wq[ins](role_text, h_text) = rb;
      w.wq[gen](role_text, h_text) = rb;
      w.wk[ins](role_text, h_text) = rb;
      w.wk[gen](role_text, h_text) = rb;
      w.wq[ins](role_ctrl, h_scan) = k.scan_gain;
      // Vision keys carry scan_gain, so the generated-row query is scaled to
      // give an effective product of scan_gain_generated^2.
      w.wq[gen](role_gen, h_scan) = k.scan_gain_generated * k.scan_gain_generated / k.scan_gain;
      w.wk[vis](role_vis, h_scan) = k.scan_gain;
      for (int i = 0; i < dc; ++i) {
        w.wv[vis](i, i) = 1.0;
        w.wv[ins](ctx + i, i) = 1.0;
        w.wv[gen](ctx + i, i) = 1.0;
        w.wv[gen](i, i) = 1.0;
      }
    }
  }
}

int Model::ctx_offset() const { return cfg_.code_dim() + 4 + 2 * cfg_.num_heads; }

std::string Model::weight_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_matrix(h, codes_);
  for (const auto& l : layers_)
    for (const auto& w : l.heads)
      for (int r = 0; r < 3; ++r) {
        hash_matrix(h, w.wq[r]);
        hash_matrix(h, w.wk[r]);
        hash_matrix(h, w.wv[r]);
      }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Vector Model::input_features(const StreamEntry& e) const {
  const int dc = cfg_.code_dim();
  const int D = cfg_.d_model;
  Vector x(D, 0.0);
  const auto& vocab = cfg_.vocab;
  switch (e.role) {
    case Role::kVision:
      if (static_cast<int>(e.embedding.size()) != D)
        throw DimensionError("vision embedding must have length d_model");
      x = e.embedding;
      x[dc] += 1.0;
      break;
    case Role::kInstruction:
    case Role::kGenerated:
      if (vocab.is_object_token(e.token)) {
        const int o = vocab.object_of(e.token);
        for (int i = 0; i < dc; ++i) x[i] = codes_(o, i);
      } else if (e.token < 0 || e.token >= kNumControl) {
        throw VocabularyError("unknown token id: " + std::to_string(e.token));
      } else if (e.role == Role::kInstruction) {
        x[dc + 2] = 1.0;
      }
      x[dc + 1] = 1.0;
      if (e.role == Role::kGenerated) x[dc + 3] = 1.0;
      break;
  }
  const double p = static_cast<double>(e.position);
  for (int h = 0; h < cfg_.num_heads; ++h) {
    const double w = cfg_.knobs.omega * (1.0 + 0.25 * h);
    x[dc + 4 + 2 * h] += std::cos(w * p);
    x[dc + 5 + 2 * h] += std::sin(w * p);
  }
  return x;
}

Vector Model::normalized(const double* x) const {
  const int dc = cfg_.code_dim();
  const int c0 = ctx_offset();
  Vector out(x, x + cfg_.d_model);
  double s = 0.0;
  for (int i = 0; i < dc; ++i) s += x[c0 + i] * x[c0 + i];
  const double inv = 1.0 / std::sqrt(s + cfg_.knobs.norm_eps);
  for (int i = 0; i < dc; ++i) out[c0 + i] = x[c0 + i] * inv;
  return out;
}

std::int64_t Model::count_macs(int n, int n_vision, int layer_i, int kept) const {
  const std::int64_t D = cfg_.d_model;
  std::int64_t total = 0;
  for (int l = 1; l <= cfg_.num_layers; ++l) {
    const std::int64_t m = l <= layer_i ? n : n - n_vision + kept;
    total += 4 * m * D * D;
    if (l == 1) {
      const std::int64_t t = n - n_vision;
      total += D * (std::int64_t{n_vision} * (n_vision + 1) + t * (t + 1));
    } else {
      total += D * m * (m + 1);
    }
  }
  const std::int64_t no = cfg_.vocab.n_objects();
  total += 2 * no * cfg_.code_dim() + no * no;
  return total;
}

ForwardResult Model::forward(const TokenStream& stream) const {
  return run(stream, cfg_.num_layers, nullptr);
}

ForwardResult Model::forward_from_layer(const TokenStream& stream, int layer_i,
                                        const std::vector<int>& kept_vision) const {
  if (layer_i < 1 || layer_i > cfg_.num_layers)
    throw InputError("layer_i must lie in [1, " + std::to_string(cfg_.num_layers) + "]");
  return run(stream, layer_i, &kept_vision);
}

namespace {

// Layer 1 keeps the modalities apart: vision rows see vision, text rows see
// text. Rows [0, nv) are vision.
AttentionResult local_attention(const Matrix& q, const Matrix& k, const Matrix& v, int d_l, std::size_t nv) {
  const std::size_t m = q.rows(), dv = v.cols();
  auto block = [&](const Matrix& src, std::size_t lo, std::size_t hi) {
    Matrix b(hi - lo, src.cols());
    for (std::size_t r = lo; r < hi; ++r) std::copy(src.row(r), src.row(r) + src.cols(), b.row(r - lo));
    return b;
  };
  AttentionResult out{Matrix(m, dv), Matrix(m, m)};
  for (auto [lo, hi] : {std::pair<std::size_t, std::size_t>{0, nv}, {nv, m}}) {
    if (lo == hi) continue;
    AttentionResult part = causal_attention(block(q, lo, hi), block(k, lo, hi), block(v, lo, hi), d_l);
    for (std::size_t r = 0; r < hi - lo; ++r) {
      std::copy(part.r.row(r), part.r.row(r) + dv, out.r.row(lo + r));
      std::copy(part.a.row(r), part.a.row(r) + (hi - lo), out.a.row(lo + r) + lo);
    }
  }
  return out;
}

}  // namespace

ForwardResult Model::run(const TokenStream& stream, int layer_i,
                         const std::vector<int>* kept_vision) const {
  if (stream.empty()) throw InputError("forward: empty stream");
  stream.validate();
  const int n = static_cast<int>(stream.size());
  if (stream[n - 1].role == Role::kVision) throw InputError("forward: stream ends with a vision token");
  const int D = cfg_.d_model;
  const int H = cfg_.num_heads;
  const int dh = cfg_.head_dim();
  const int dc = cfg_.code_dim();
  const int c0 = ctx_offset();

  std::vector<char> keep(n, 1);
  int n_kept = 0;
  const int nv = stream.n_vision();
  if (kept_vision) {
    std::vector<char> mark(n, 0);
    for (int v : *kept_vision) {
      if (v < 0 || v >= n || stream[v].role != Role::kVision)
        throw InputError("kept_vision contains a non-vision index: " + std::to_string(v));
      mark[v] = 1;
    }
    for (int i = 0; i < n; ++i) {
      if (stream[i].role == Role::kVision) {
        keep[i] = mark[i];
        n_kept += mark[i];
      }
    }
  } else {
    n_kept = nv;
  }

  Matrix x(n, D);
  for (int i = 0; i < n; ++i) {
    Vector f = input_features(stream[i]);
    std::copy(f.begin(), f.end(), x.row(i));
  }

  ForwardResult out;
  out.trace.layers.resize(cfg_.num_layers);
  Readout readout;
  readout.perception.assign(cfg_.vocab.n_objects(), 0.0);
  readout.context.assign(cfg_.vocab.n_objects(), 0.0);

  for (int l = 0; l < cfg_.num_layers; ++l) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (l < layer_i || keep[i]) idx.push_back(i);
    const int m = static_cast<int>(idx.size());
    int n_vis_rows = 0;
    for (int i : idx) n_vis_rows += stream[i].role == Role::kVision;

    Matrix xn(m, D);
    for (int r = 0; r < m; ++r) {
      Vector v = normalized(x.row(idx[r]));
      std::copy(v.begin(), v.end(), xn.row(r));
    }

    LayerAttention& la = out.trace.layers[l];
    la.tokens = idx;
    Matrix delta(m, dc);
    Vector hv(dc, 0.0), ht(dc, 0.0);
    double vis_mass = 0.0;
    for (int h = 0; h < H; ++h) {
      const HeadWeights& w = layers_[l].heads[h];
      Matrix q(m, dh), kk(m, dh), v(m, dh);
      for (int r = 0; r < m; ++r) {
        const int role = role_index(stream[idx[r]].role);
        const double* xr = xn.row(r);
        double* qr = q.row(r);
        double* kr = kk.row(r);
        double* vr = v.row(r);
        for (int a = 0; a < D; ++a) {
          const double xa = xr[a];
          if (xa == 0.0) continue;
          const double* wq = w.wq[role].row(a);
          const double* wk = w.wk[role].row(a);
          const double* wv = w.wv[role].row(a);
          for (int c = 0; c < dh; ++c) {
            qr[c] += xa * wq[c];
            kr[c] += xa * wk[c];
            vr[c] += xa * wv[c];
          }
        }
      }
      AttentionResult att = l == 0 ? local_attention(q, kk, v, dh, n_vis_rows) : causal_attention(q, kk, v, dh);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < dc; ++c) delta(r, c) += att.r(r, c) / H;
      if (l == cfg_.num_layers - 1) {
        const int last = m - 1;
        for (int j = 0; j < m; ++j) {
          const double a = att.a(last, j) / H;
          const bool is_vis = stream[idx[j]].role == Role::kVision;
          if (is_vis) vis_mass += a;
          Vector& dst = is_vis ? hv : ht;
          for (int c = 0; c < dc; ++c) dst[c] += a * v(j, c);
        }
      }
      la.heads.push_back(std::move(att.a));
    }
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < dc; ++c) x(idx[r], c0 + c) += delta(r, c);

    if (l == cfg_.num_layers - 1) {
      for (int o = 0; o < cfg_.vocab.n_objects(); ++o) {
        double pv = 0.0, pt = 0.0;
        for (int c = 0; c < dc; ++c) {
          pv += codes_(o, c) * hv[c];
          pt += codes_(o, c) * ht[c];
        }
        readout.perception[o] = pv;
        readout.context[o] = pt;
      }
      readout.vision_mass = vis_mass;
    }
  }

  out.logits = head_logits(stream, readout);
  out.mac_count = count_macs(n, nv, layer_i, n_kept);
  return out;
}

Vector Model::head_logits(const TokenStream& stream, const Readout& r) const {
  const auto& vocab = cfg_.vocab;
  const int no = vocab.n_objects();
  const double kappa = cfg_.evidence_gain;
  const double tau = cfg_.answer_threshold;
  const double lam = cfg_.prior_strength;
  const auto& k = cfg_.knobs;
  const Matrix& p = vocab.cooccurrence();

  Vector mix(no);
  for (int o = 0; o < no; ++o) mix[o] = k.assoc_vision * r.perception[o] + k.assoc_text * r.context[o];
  Vector prior(no, 0.0);
  for (int a = 0; a < no; ++a) {
    if (mix[a] == 0.0) continue;
    for (int b = 0; b < no; ++b) prior[b] += kappa * mix[a] * p(a, b);
  }

  Vector logits(vocab.size(), -k.mask_penalty);
  bool query = false;
  int queried = -1;
  for (const auto& e : stream.entries()) {
    if (e.role != Role::kInstruction) continue;
    if (e.token == kQuery) {
      query = true;
    } else if (query && vocab.is_object_token(e.token)) {
      queried = vocab.object_of(e.token);
    }
  }
  if (query) {
    if (queried < 0) throw InputError("QUERY instruction without an object");
    logits[kYes] = kappa * r.perception[queried] + lam * prior[queried];
    logits[kNo] = kappa * (tau - r.perception[queried]);
    return logits;
  }

  std::vector<char> mentioned(no, 0);
  for (const auto& e : stream.entries())
    if (e.role == Role::kGenerated && vocab.is_object_token(e.token)) mentioned[vocab.object_of(e.token)] = 1;
  double best = -std::numeric_limits<double>::infinity();
  for (int o = 0; o < no; ++o) {
    double v = kappa * r.perception[o] + lam * prior[o];
    if (mentioned[o]) {
      v -= k.mask_penalty;
    } else {
      best = std::max(best, r.perception[o]);
    }
    logits[vocab.object_token(o)] = v;
  }
  logits[kEos] = kappa * (tau - (std::isfinite(best) ? best : 0.0));
  return logits;
}

Model build_model(const ModelConfig& config) { return Model(config); }

std::vector<Vector> embed_scene(const Scene& scene, const Model& model) {
  const auto& cfg = model.config();
  if (scene.present.empty()) throw InputError("scene has no objects");
  const int k = static_cast<int>(scene.present.size());
  for (int o : scene.present)
    if (o < 0 || o >= cfg.vocab.n_objects())
      throw VocabularyError("scene object not in vocabulary: " + std::to_string(o));
  if (cfg.n_vision < k) throw InputError("n_vision smaller than the number of present objects");
  const int dc = cfg.code_dim();
  Rng rng(derive_seed(cfg.seed, "embed", static_cast<std::uint64_t>(scene.id)));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Vector> out(cfg.n_vision, Vector(cfg.d_model, 0.0));
  for (int t = 0; t < cfg.n_vision; ++t) {
    const int o = scene.present[t % k];
    for (int i = 0; i < dc; ++i) out[t][i] = model.codes()(o, i) + cfg.noise_scale * nd(rng);
  }
  return out;
}

ForwardResult forward_step(const Model& model, const TokenStream& stream) { return model.forward(stream); }

ForwardResult forward_from_layer(const Model& model, const TokenStream& stream, int layer_i,
                                 const std::vector<int>& kept_vision) {
  return model.forward_from_layer(stream, layer_i, kept_vision);
}

Vector prior_logits(const Model& model, std::optional<int> last_object) {
  const auto& vocab = model.vocab();
  const double kappa = model.config().evidence_gain;
  Vector out(vocab.size(), 0.0);
  const int no = vocab.n_objects();
  if (last_object && (*last_object < 0 || *last_object >= no))
    throw VocabularyError("prior_logits: object out of range");
  for (int o = 0; o < no; ++o) {
    out[vocab.object_token(o)] =
        last_object ? kappa * vocab.cooccurrence()(*last_object, o) : kappa / static_cast<double>(no);
  }
  return out;
}

TokenStream query_stream(const Model& model, const std::vector<Vector>& vision, int object) {
  return TokenStream::build(vision, {kBos, kQuery, model.vocab().object_token(object)});
}

TokenStream caption_stream(const std::vector<Vector>& vision) {
  return TokenStream::build(vision, {kBos, kDescribe});
}

}  // namespace sidlab
