#include "sidlab/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sidlab/errors.hpp"
#include "sidlab/prefix_cache.hpp"
#include "sidlab/seed.hpp"

namespace sidlab {

namespace {

const char* kObjectNames[] = {
    "person", "bicycle",  "car",      "dog",    "frisbee", "tree",     "cat",      "bench",
    "bird",   "horse",    "sheep",    "cow",    "bottle",  "cup",      "fork",     "knife",
    "spoon",  "bowl",     "banana",   "apple",  "pizza",   "donut",    "cake",     "chair",
    "couch",  "bed",      "table",    "laptop", "mouse",   "remote",   "keyboard", "phone",
    "oven",   "sink",     "book",     "clock",  "vase",    "scissors", "umbrella", "kite",
    "boat",   "train",    "bus",      "truck",  "skis",    "surfboard", "backpack", "handbag",
};

std::string object_name(int i) {
  constexpr int n = sizeof(kObjectNames) / sizeof(kObjectNames[0]);
  if (i < n) return kObjectNames[i];
  return "object" + std::to_string(i);
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ReportError("bad number in report: " + s);
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ReportError("cannot write report: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ReportError("cannot read report: " + path);
  return is;
}

void finish(std::ofstream& os, const std::string& path) {
  os.flush();
  if (!os) throw ReportError("write failed: " + path);
}

// Runs fn(i, backend) for i in [0, n) on up to `workers` threads. Each worker
// gets its own backend.
void parallel_for(int n, int workers, const Model& model, bool use_cache,
                  const std::function<void(int, Backend&)>& fn) {
  auto make = [&]() -> std::unique_ptr<Backend> {
    if (use_cache) return std::make_unique<CachedBackend>(model);
    return std::make_unique<ReferenceBackend>(model);
  };
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    auto b = make();
    for (int i = 0; i < n; ++i) fn(i, *b);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        auto b = make();
        for (int i = next++; i < n; i = next++) fn(i, *b);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

DecodeConfig scene_config(const DecodeConfig& c, std::uint64_t seed, int scene_id) {
  DecodeConfig out = c;
  out.seed = derive_seed(seed ^ c.seed, "decode", static_cast<std::uint64_t>(scene_id));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- world

World gen_world(int n_objects, double sparsity, std::uint64_t seed) {
  if (n_objects < 4) throw InputError("gen_world: n_objects must be >= 4");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw InputError("gen_world: sparsity must lie in [0,1]");
  Rng rng = make_rng(seed, "world");
  const int n = n_objects;
  const int k = std::max(1, static_cast<int>(std::lround((1.0 - sparsity) * (n - 1))));
  Matrix p(n, n);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (int a = 0; a < n; ++a) {
    // Same-cluster partners (blocks of 4) are ten times likelier.
    std::vector<double> w(n);
    for (int b = 0; b < n; ++b) w[b] = b == a ? 0.0 : (b / 4 == a / 4 ? 3.0 : 0.3);
    std::vector<int> chosen;
    for (int t = 0; t < k; ++t) {
      std::discrete_distribution<int> pick(w.begin(), w.end());
      int b = pick(rng);
      chosen.push_back(b);
      w[b] = 0.0;
    }
    double s = 0.0;
    for (int b : chosen) {
      double g = gamma(rng);
      if (g < 1e-12) g = 1e-12;
      p(a, b) = g;
      s += g;
    }
    for (int b = 0; b < n; ++b) p(a, b) /= s;
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Vector pop(n);
  double total = 0.0;
  for (int r = 0; r < n; ++r) total += 1.0 / (r + 1);
  for (int r = 0; r < n; ++r) pop[perm[r]] = 1.0 / (r + 1) / total;
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back(object_name(i));
  return World{Vocabulary(std::move(names), std::move(p)), std::move(pop), seed};
}

std::vector<Scene> gen_scenes(const World& world, int n_scenes, int objects_per_scene, std::uint64_t seed) {
  const int n = world.vocab.n_objects();
  if (objects_per_scene < 1 || objects_per_scene > n)
    throw InputError("gen_scenes: objects_per_scene must lie in [1, n_objects]");
  if (n_scenes < 0) throw InputError("gen_scenes: n_scenes must be >= 0");
  const Matrix& p = world.vocab.cooccurrence();
  std::vector<Scene> out;
  out.reserve(n_scenes);
  for (int s = 0; s < n_scenes; ++s) {
    Rng rng(derive_seed(seed, "scene", static_cast<std::uint64_t>(s)));
    Scene sc;
    sc.id = s;
    std::vector<char> in(n, 0);
    std::discrete_distribution<int> first(world.popularity.begin(), world.popularity.end());
    int o = first(rng);
    sc.present.push_back(o);
    in[o] = 1;
    while (static_cast<int>(sc.present.size()) < objects_per_scene) {
      std::vector<double> w(n, 0.0);
      for (int c = 0; c < n; ++c) {
        if (in[c]) continue;
        double co = 0.0;
        for (int q : sc.present) co += p(q, c);
        w[c] = world.popularity[c] * (0.2 + co / static_cast<double>(sc.present.size()));
      }
      std::discrete_distribution<int> next(w.begin(), w.end());
      o = next(rng);
      sc.present.push_back(o);
      in[o] = 1;
    }
    out.push_back(std::move(sc));
  }
  return out;
}

std::string to_string(PopeSetting s) {
  switch (s) {
    case PopeSetting::kRandom:
      return "random";
    case PopeSetting::kPopular:
      return "popular";
    case PopeSetting::kAdversarial:
      return "adversarial";
  }
  return "?";
}

PopeSetting parse_setting(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::tolower(c); });
  if (u == "random") return PopeSetting::kRandom;
  if (u == "popular") return PopeSetting::kPopular;
  if (u == "adversarial") return PopeSetting::kAdversarial;
  throw ConfigError("unknown POPE setting: " + s);
}

double max_cooccurrence(const World& world, const Scene& scene, int object) {
  double best = 0.0;
  for (int p : scene.present) best = std::max(best, world.vocab.cooccurrence()(p, object));
  return best;
}

std::vector<PopeProbe> build_pope_probes(const World& world, const Scene& scene, PopeSetting setting,
                                         int k, std::uint64_t seed) {
  const int n = world.vocab.n_objects();
  if (k < 0) throw GenerationError("build_pope_probes: k must be >= 0");
  std::vector<char> in(n, 0);
  for (int o : scene.present) in[o] = 1;
  std::vector<int> present = scene.present;
  std::vector<int> absent;
  for (int o = 0; o < n; ++o)
    if (!in[o]) absent.push_back(o);
  if (static_cast<int>(present.size()) < k || static_cast<int>(absent.size()) < k)
    throw GenerationError("build_pope_probes: scene " + std::to_string(scene.id) +
                          " lacks objects for k=" + std::to_string(k));
  Rng rng(derive_seed(seed, "probes"));
  auto sample = [&](std::vector<int> pool, int m) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(m);
    std::sort(pool.begin(), pool.end());
    return pool;
  };
  std::vector<int> yes = sample(present, k);
  std::vector<int> no;
  switch (setting) {
    case PopeSetting::kRandom:
      no = sample(absent, k);
      break;
    case PopeSetting::kPopular: {
      std::vector<int> order = absent;
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return world.popularity[a] > world.popularity[b]; });
      no.assign(order.begin(), order.begin() + k);
      break;
    }
    case PopeSetting::kAdversarial: {
      std::vector<int> ranked, zero;
      for (int o : absent) (max_cooccurrence(world, scene, o) > 0.0 ? ranked : zero).push_back(o);
      std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
        return max_cooccurrence(world, scene, a) > max_cooccurrence(world, scene, b);
      });
      no.assign(ranked.begin(), ranked.begin() + std::min<int>(k, ranked.size()));
      const int rest = k - static_cast<int>(no.size());
      if (rest > 0) {
        std::vector<int> fill = sample(zero, rest);
        no.insert(no.end(), fill.begin(), fill.end());
      }
      break;
    }
  }
  std::vector<PopeProbe> out;
  for (int o : yes) out.push_back({scene.id, o, true, setting});
  for (int o : no) out.push_back({scene.id, o, false, setting});
  return out;
}

// ---------------------------------------------------------------- metrics

PopeResult pope_from_counts(int tp, int fp, int tn, int fn) {
  PopeResult r{tp, fp, tn, fn};
  const int total = tp + fp + tn + fn;
  if (total == 0) throw InputError("pope_metrics: no probes");
  r.accuracy = static_cast<double>(tp + tn) / total;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

PopeResult pope_metrics(const std::vector<bool>& predictions, const std::vector<PopeProbe>& probes) {
  if (predictions.size() != probes.size()) throw InputError("pope_metrics: length mismatch");
  int tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (predictions[i]) {
      (probes[i].truth ? tp : fp)++;
    } else {
      (probes[i].truth ? fn : tn)++;
    }
  }
  return pope_from_counts(tp, fp, tn, fn);
}

ChairResult chair_metrics(const std::vector<std::vector<std::string>>& captions,
                          const std::vector<std::vector<std::string>>& truths) {
  if (captions.empty()) throw InputError("chair_metrics: no captions");
  if (captions.size() != truths.size()) throw InputError("chair_metrics: length mismatch");
  ChairResult r;
  long halluc = 0, mentions = 0, bad_caps = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    std::set<std::string> truth(truths[i].begin(), truths[i].end());
    int h = 0;
    for (const auto& m : captions[i])
      if (!truth.count(m)) ++h;
    r.hallucinated.push_back(h);
    r.mentioned.push_back(static_cast<int>(captions[i].size()));
    halluc += h;
    mentions += static_cast<long>(captions[i].size());
    if (h > 0) ++bad_caps;
  }
  r.chair_i = mentions > 0 ? static_cast<double>(halluc) / mentions : 0.0;
  r.chair_s = static_cast<double>(bad_caps) / captions.size();
  return r;
}

std::vector<std::string> caption_objects(const Vocabulary& vocab, const std::vector<int>& tokens) {
  std::vector<std::string> out;
  for (int t : tokens)
    if (vocab.is_object_token(t)) out.push_back(vocab.token_name(t));
  return out;
}

// ---------------------------------------------------------------- evaluation

std::vector<PopeRow> eval_pope(const Model& model, const World& world, const std::vector<Scene>& scenes,
                               PopeSetting setting, const std::vector<DecodeConfig>& configs,
                               std::uint64_t seed, const EvalOptions& opt) {
  for (const auto& c : configs) c.validate(model.config());
  const int nc = static_cast<int>(configs.size());
  const int ns = static_cast<int>(scenes.size());
  // counts[scene][config] = {tp, fp, tn, fn}
  std::vector<std::vector<std::array<int, 4>>> counts(ns, std::vector<std::array<int, 4>>(nc, {0, 0, 0, 0}));
  parallel_for(ns, opt.workers, model, opt.use_cache, [&](int si, Backend& backend) {
    const Scene& scene = scenes[si];
    const auto vision = embed_scene(scene, model);
    const auto probes = build_pope_probes(world, scene, setting, opt.probes_per_polarity,
                                          derive_seed(seed, "probes", static_cast<std::uint64_t>(scene.id)));
    std::vector<DecodeConfig> cfgs;
    for (const auto& c : configs) cfgs.push_back(scene_config(c, seed, scene.id));
    for (const auto& probe : probes) {
      const TokenStream stream = query_stream(model, vision, probe.object);
      for (int c = 0; c < nc; ++c) {
        const bool yes = decode_step(backend, stream, cfgs[c]).token == kYes;
        auto& k = counts[si][c];
        if (yes) {
          ++k[probe.truth ? 0 : 1];
        } else {
          ++k[probe.truth ? 3 : 2];
        }
      }
    }
  });
  std::vector<PopeRow> rows;
  for (int c = 0; c < nc; ++c) {
    int tp = 0, fp = 0, tn = 0, fn = 0;
    for (int si = 0; si < ns; ++si) {
      tp += counts[si][c][0];
      fp += counts[si][c][1];
      tn += counts[si][c][2];
      fn += counts[si][c][3];
    }
    rows.push_back({setting, configs[c], seed, pope_from_counts(tp, fp, tn, fn)});
  }
  return rows;
}

std::vector<ChairRow> eval_chair(const Model& model, const World& world, const std::vector<Scene>& scenes,
                                 const std::vector<DecodeConfig>& configs, std::uint64_t seed,
                                 const EvalOptions& opt, std::vector<std::vector<Caption>>* captions_out) {
  for (const auto& c : configs) c.validate(model.config());
  const int nc = static_cast<int>(configs.size());
  const int ns = static_cast<int>(scenes.size());
  std::vector<std::vector<std::vector<int>>> gens(nc, std::vector<std::vector<int>>(ns));
  parallel_for(ns, opt.workers, model, opt.use_cache, [&](int si, Backend& backend) {
    const Scene& scene = scenes[si];
    const TokenStream stream = caption_stream(embed_scene(scene, model));
    for (int c = 0; c < nc; ++c)
      gens[c][si] = generate(backend, stream, scene_config(configs[c], seed, scene.id)).tokens;
  });
  std::vector<std::vector<std::string>> truths;
  for (const auto& s : scenes) {
    std::vector<std::string> t;
    for (int o : s.present) t.push_back(world.vocab.objects()[o]);
    truths.push_back(std::move(t));
  }
  std::vector<ChairRow> rows;
  if (captions_out) captions_out->assign(nc, {});
  for (int c = 0; c < nc; ++c) {
    std::vector<std::vector<std::string>> caps;
    long len = 0;
    for (int si = 0; si < ns; ++si) {
      caps.push_back(caption_objects(world.vocab, gens[c][si]));
      for (int t : gens[c][si])
        if (t != kEos) ++len;
      if (captions_out) (*captions_out)[c].push_back({scenes[si].id, gens[c][si]});
    }
    ChairRow row;
    row.decode = configs[c];
    row.seed = seed;
    row.result = chair_metrics(caps, truths);
    row.n_captions = ns;
    row.mean_len = ns > 0 ? static_cast<double>(len) / ns : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

EfficiencyProfile efficiency_profile(const Model& model, const std::vector<Scene>& scenes,
                                     const std::vector<DecodeConfig>& configs) {
  if (scenes.empty() || configs.empty()) throw InputError("efficiency_profile: empty inputs");
  for (const auto& c : configs) c.validate(model.config());
  ReferenceBackend backend(model);
  // Replayed states: every prefix of the NORMAL greedy caption.
  std::vector<TokenStream> states;
  DecodeConfig base;
  base.max_new_tokens = configs.front().max_new_tokens;
  for (const auto& scene : scenes) {
    TokenStream s = caption_stream(embed_scene(scene, model));
    Generation g = generate(backend, s, base);
    // Step t of a generation sees the first t tokens.
    for (std::size_t t = 0; t < g.tokens.size(); ++t) {
      states.push_back(s);
      if (g.tokens[t] != kEos) s.append_generated(g.tokens[t]);
    }
  }
  auto run = [&](const DecodeConfig& c) {
    EfficiencyEntry e;
    e.strategy = to_string(c.strategy);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < states.size(); ++i) {
      DecodeConfig ci = c;
      ci.seed = derive_seed(c.seed, "bench", i);
      StepResult r = decode_step(backend, states[i], ci);
      for (auto m : r.diagnostics.pass_macs) e.mac_total += m;
    }
    e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    e.tokens = static_cast<int>(states.size());
    return e;
  };
  EfficiencyProfile prof;
  std::int64_t normal = -1;
  for (const auto& c : configs) {
    prof.entries.push_back(run(c));
    if (c.strategy == Strategy::kNormal && normal < 0) normal = prof.entries.back().mac_total;
  }
  if (normal < 0) {
    DecodeConfig n = configs.front();
    n.strategy = Strategy::kNormal;
    normal = run(n).mac_total;
  }
  for (auto& e : prof.entries) e.mac_ratio = static_cast<double>(e.mac_total) / static_cast<double>(normal);
  return prof;
}

// ---------------------------------------------------------------- reports

const std::vector<std::string> kPopeColumns = {"setting",    "strategy", "alpha",    "beta",
                                               "layer_i",    "keep_ratio", "seed",   "accuracy",
                                               "precision",  "recall",   "f1",       "n_probes"};
const std::vector<std::string> kChairColumns = {"strategy", "alpha",   "beta",    "layer_i",    "keep_ratio",
                                                "seed",     "chair_s", "chair_i", "n_captions", "mean_len"};

namespace {

std::vector<std::string> pope_fields(const PopeRow& r) {
  return {to_string(r.setting),          to_string(r.decode.strategy),  fmt_double(r.decode.alpha),
          fmt_double(r.decode.beta),     std::to_string(r.decode.layer_i), fmt_double(r.decode.keep_ratio),
          std::to_string(r.seed),        fmt_double(r.result.accuracy), fmt_double(r.result.precision),
          fmt_double(r.result.recall),   fmt_double(r.result.f1),       std::to_string(r.result.n_probes())};
}

std::vector<std::string> chair_fields(const ChairRow& r) {
  return {to_string(r.decode.strategy),   fmt_double(r.decode.alpha),      fmt_double(r.decode.beta),
          std::to_string(r.decode.layer_i), fmt_double(r.decode.keep_ratio), std::to_string(r.seed),
          fmt_double(r.result.chair_s),   fmt_double(r.result.chair_i),    std::to_string(r.n_captions),
          fmt_double(r.mean_len)};
}

nlohmann::json typed(const std::string& col, const std::string& v) {
  static const std::set<std::string> strings = {"setting", "strategy"};
  static const std::set<std::string> ints = {"layer_i", "n_probes", "n_captions", "tokens", "mac_total"};
  if (strings.count(col)) return v;
  if (col == "seed") return std::stoull(v);
  if (ints.count(col)) return std::stoll(v);
  return parse_double(v);
}

template <class Row>
void write_rows(const std::vector<Row>& rows, const std::vector<std::string>& cols,
                std::vector<std::string> (*fields)(const Row&), const std::string& path, ReportFormat fmt) {
  auto os = open_out(path);
  if (fmt == ReportFormat::kCsv) {
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
    for (const auto& r : rows) {
      auto f = fields(r);
      for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
      os << "\n";
    }
  } else {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      auto f = fields(r);
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      for (std::size_t i = 0; i < cols.size(); ++i) obj[cols[i]] = typed(cols[i], f[i]);
      arr.push_back(obj);
    }
    os << arr.dump(2) << "\n";
  }
  finish(os, path);
}

std::vector<std::map<std::string, std::string>> read_csv(const std::string& path,
                                                         const std::vector<std::string>& cols) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line)) throw ReportError("empty report: " + path);
  if (split_csv(line) != cols) throw ReportError("unexpected header in " + path);
  std::vector<std::map<std::string, std::string>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != cols.size()) throw ReportError("ragged row in " + path);
    std::map<std::string, std::string> m;
    for (std::size_t i = 0; i < cols.size(); ++i) m[cols[i]] = f[i];
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

void write_report(const std::vector<PopeRow>& rows, const std::string& path, ReportFormat fmt) {
  write_rows<PopeRow>(rows, kPopeColumns, pope_fields, path, fmt);
}

void write_report(const std::vector<ChairRow>& rows, const std::string& path, ReportFormat fmt) {
  write_rows<ChairRow>(rows, kChairColumns, chair_fields, path, fmt);
}

void write_report(const EfficiencyProfile& profile, const std::string& path, ReportFormat fmt) {
  auto os = open_out(path);
  if (fmt == ReportFormat::kJson) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : profile.entries) {
      nlohmann::ordered_json o;
      o["strategy"] = e.strategy;
      o["mac_total"] = e.mac_total;
      o["mac_ratio"] = e.mac_ratio;
      o["wall_ms"] = e.wall_ms;
      o["tokens"] = e.tokens;
      arr.push_back(o);
    }
    os << arr.dump(2) << "\n";
  } else {
    os << "strategy,mac_total,mac_ratio,wall_ms,tokens\n";
    for (const auto& e : profile.entries)
      os << e.strategy << "," << e.mac_total << "," << fmt_double(e.mac_ratio) << "," << fmt_double(e.wall_ms)
         << "," << e.tokens << "\n";
  }
  finish(os, path);
}

std::vector<PopeRow> read_pope_csv(const std::string& path) {
  std::vector<PopeRow> out;
  for (auto& m : read_csv(path, kPopeColumns)) {
    PopeRow r;
    r.setting = parse_setting(m["setting"]);
    r.decode.strategy = parse_strategy(m["strategy"]);
    r.decode.alpha = parse_double(m["alpha"]);
    r.decode.beta = parse_double(m["beta"]);
    r.decode.layer_i = std::stoi(m["layer_i"]);
    r.decode.keep_ratio = parse_double(m["keep_ratio"]);
    r.seed = std::stoull(m["seed"]);
    r.result.accuracy = parse_double(m["accuracy"]);
    r.result.precision = parse_double(m["precision"]);
    r.result.recall = parse_double(m["recall"]);
    r.result.f1 = parse_double(m["f1"]);
    // Counts are not part of the report; keep the probe total.
    r.result.tn = std::stoi(m["n_probes"]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ChairRow> read_chair_csv(const std::string& path) {
  std::vector<ChairRow> out;
  for (auto& m : read_csv(path, kChairColumns)) {
    ChairRow r;
    r.decode.strategy = parse_strategy(m["strategy"]);
    r.decode.alpha = parse_double(m["alpha"]);
    r.decode.beta = parse_double(m["beta"]);
    r.decode.layer_i = std::stoi(m["layer_i"]);
    r.decode.keep_ratio = parse_double(m["keep_ratio"]);
    r.seed = std::stoull(m["seed"]);
    r.result.chair_s = parse_double(m["chair_s"]);
    r.result.chair_i = parse_double(m["chair_i"]);
    r.n_captions = std::stoi(m["n_captions"]);
    r.mean_len = parse_double(m["mean_len"]);
    out.push_back(std::move(r));
  }
  return out;
}

EfficiencyProfile read_efficiency_json(const std::string& path) {
  auto is = open_in(path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ReportError("bad efficiency report " + path + ": " + e.what());
  }
  std::string why;
  if (!validate_efficiency_json(j, &why)) throw ReportError("efficiency report " + path + ": " + why);
  EfficiencyProfile p;
  for (const auto& o : j)
    p.entries.push_back({o.at("strategy").get<std::string>(), o.at("mac_total").get<std::int64_t>(),
                         o.at("mac_ratio").get<double>(), o.at("wall_ms").get<double>(), o.at("tokens").get<int>()});
  return p;
}

nlohmann::json efficiency_schema() {
  return nlohmann::json::parse(R"({
  "type": "array",
  "items": {
    "type": "object",
    "required": ["strategy", "mac_total", "mac_ratio", "wall_ms", "tokens"],
    "additionalProperties": false,
    "properties": {
      "strategy": {"type": "string"},
      "mac_total": {"type": "integer", "minimum": 0},
      "mac_ratio": {"type": "number", "minimum": 0},
      "wall_ms": {"type": "number", "minimum": 0},
      "tokens": {"type": "integer", "minimum": 0}
    }
  }
})");
}

bool validate_efficiency_json(const nlohmann::json& j, std::string* why) {
  auto fail = [&](const std::string& m) {
    if (why) *why = m;
    return false;
  };
  if (!j.is_array()) return fail("top level must be an array");
  const auto schema = efficiency_schema()["items"];
  for (const auto& o : j) {
    if (!o.is_object()) return fail("entries must be objects");
    for (const auto& req : schema["required"])
      if (!o.contains(req.get<std::string>())) return fail("missing field " + req.get<std::string>());
    for (auto it = o.begin(); it != o.end(); ++it) {
      if (!schema["properties"].contains(it.key())) return fail("unexpected field " + it.key());
      const std::string type = schema["properties"][it.key()]["type"];
      const auto& v = it.value();
      if (type == "string" && !v.is_string()) return fail(it.key() + " must be a string");
      if (type == "integer" && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        return fail(it.key() + " must be a non-negative integer");
      if (type == "number" && !(v.is_number() && v.get<double>() >= 0)) return fail(it.key() + " must be >= 0");
    }
  }
  return true;
}

void write_scenes_jsonl(const World& world, const std::vector<Scene>& scenes, const std::string& path) {
  auto os = open_out(path);
  for (const auto& s : scenes) {
    nlohmann::json names = nlohmann::json::array();
    for (int o : s.present) names.push_back(world.vocab.objects()[o]);
    nlohmann::ordered_json line;
    line["id"] = s.id;
    line["present"] = names;
    os << line.dump() << "\n";
  }
  finish(os, path);
}

std::vector<Scene> read_scenes_jsonl(const World& world, const std::string& path) {
  auto is = open_in(path);
  std::vector<Scene> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ReportError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Scene s;
    s.id = j.at("id").get<int>();
    std::set<int> seen;
    for (const auto& name : j.at("present")) {
      int o = -1;
      try {
        o = world.vocab.object_of(world.vocab.token_of(name.get<std::string>()));
      } catch (const VocabularyError& e) {
        throw ReportError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (!seen.insert(o).second) throw ReportError(path + ":" + std::to_string(lineno) + ": duplicate object");
      s.present.push_back(o);
    }
    if (s.present.empty()) throw ReportError(path + ":" + std::to_string(lineno) + ": empty scene");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sidlab
