#include "sidlab/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "sidlab/errors.hpp"
#include "sidlab/judge_client.hpp"
#include "sidlab/seed.hpp"

namespace sidlab {

namespace fs = std::filesystem;

namespace {

nlohmann::json strategies_json(const std::vector<Strategy>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (auto s : v) a.push_back(to_string(s));
  return a;
}

std::vector<Strategy> parse_strategies(const nlohmann::json& j) {
  std::vector<Strategy> out;
  for (const auto& s : j) out.push_back(parse_strategy(s.get<std::string>()));
  if (out.empty()) throw ConfigError("strategy list is empty");
  return out;
}

// Rejects keys that the defaults do not have.
void check_keys(const nlohmann::json& given, const nlohmann::json& defaults, const std::string& where) {
  if (!given.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = given.begin(); it != given.end(); ++it)
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key: " + where + it.key());
}

template <class T>
T get(const nlohmann::json& j, const char* key) {
  return j.at(key).get<T>();
}

}  // namespace

nlohmann::json default_config_json() {
  const ExperimentConfig c;
  nlohmann::json model;
  to_json(model, ModelConfig{});
  model.erase("vocab");
  model["seed"] = nullptr;  // null: derived from the master seed
  nlohmann::json settings = nlohmann::json::array();
  for (auto s : c.eval.settings) settings.push_back(to_string(s));
  return {
      {"model", model},
      {"world",
       {{"n_objects", c.world.n_objects},
        {"sparsity", c.world.sparsity},
        {"n_scenes", c.world.n_scenes},
        {"objects_per_scene", c.world.objects_per_scene},
        {"scenes_file", c.world.scenes_file}}},
      {"decode", c.decode},
      {"strategies", strategies_json(c.strategies)},
      {"eval",
       {{"settings", settings},
        {"probes_per_polarity", c.eval.probes_per_polarity},
        {"use_cache", c.eval.use_cache}}},
      {"sweep",
       {{"strategies", strategies_json(c.sweep.strategies)},
        {"alpha", c.sweep.alpha},
        {"beta", c.sweep.beta},
        {"layer_i", c.sweep.layer_i},
        {"keep_ratio", c.sweep.keep_ratio}}},
      {"bench", {{"n_scenes", c.bench.n_scenes}, {"wall_time", c.bench.wall_time}}},
      {"inspect", {{"scene", c.inspect.scene}, {"object", c.inspect.object}}},
      {"judge",
       {{"template_file", c.judge.template_file},
        {"model", c.judge.model},
        {"temperature", c.judge.temperature},
        {"max_retries", c.judge.max_retries},
        {"backoff_ms", c.judge.backoff_ms},
        {"parallelism", c.judge.parallelism},
        {"swap", c.judge.swap},
        {"timeout_s", c.judge.timeout_s},
        {"n_pairs", c.judge.n_pairs}}},
      {"out", c.out},
      {"seed", c.seed},
      {"workers", c.workers},
  };
}

ExperimentConfig parse_config(const nlohmann::json& j) {
  const nlohmann::json d = default_config_json();
  ExperimentConfig c;
  try {
    check_keys(j, d, "");
    for (const char* sec : {"world", "eval", "sweep", "bench", "inspect", "judge"})
      if (j.contains(sec)) check_keys(j.at(sec), d.at(sec), std::string(sec) + ".");
    nlohmann::json m = d;
    m.merge_patch(j);  // nested objects merge; arrays replace

    c.model = m.at("model");
    const auto& w = m.at("world");
    c.world = {get<int>(w, "n_objects"), get<double>(w, "sparsity"), get<int>(w, "n_scenes"),
               get<int>(w, "objects_per_scene"), get<std::string>(w, "scenes_file")};
    c.decode = m.at("decode").get<DecodeConfig>();
    c.strategies = parse_strategies(m.at("strategies"));
    const auto& e = m.at("eval");
    c.eval.settings.clear();
    for (const auto& s : e.at("settings")) c.eval.settings.push_back(parse_setting(s.get<std::string>()));
    c.eval.probes_per_polarity = get<int>(e, "probes_per_polarity");
    c.eval.use_cache = get<bool>(e, "use_cache");
    const auto& s = m.at("sweep");
    c.sweep.strategies = parse_strategies(s.at("strategies"));
    c.sweep.alpha = get<std::vector<double>>(s, "alpha");
    c.sweep.beta = get<std::vector<double>>(s, "beta");
    c.sweep.layer_i = get<std::vector<int>>(s, "layer_i");
    c.sweep.keep_ratio = get<std::vector<double>>(s, "keep_ratio");
    c.bench = {get<int>(m.at("bench"), "n_scenes"), get<bool>(m.at("bench"), "wall_time")};
    c.inspect = {get<int>(m.at("inspect"), "scene"), get<std::string>(m.at("inspect"), "object")};
    const auto& jj = m.at("judge");
    c.judge = {get<std::string>(jj, "template_file"), get<std::string>(jj, "model"),
               get<double>(jj, "temperature"),        get<int>(jj, "max_retries"),
               get<int>(jj, "backoff_ms"),            get<int>(jj, "parallelism"),
               get<bool>(jj, "swap"),                 get<double>(jj, "timeout_s"),
               get<int>(jj, "n_pairs")};
    c.out = get<std::string>(m, "out");
    c.seed = get<std::uint64_t>(m, "seed");
    c.workers = get<int>(m, "workers");
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
  if (c.world.n_scenes < 1) throw ConfigError("world.n_scenes must be >= 1");
  if (c.world.n_objects < 4) throw ConfigError("world.n_objects must be >= 4");
  if (!(c.world.sparsity >= 0.0 && c.world.sparsity <= 1.0)) throw ConfigError("world.sparsity must lie in [0,1]");
  if (c.eval.settings.empty()) throw ConfigError("eval.settings is empty");
  if (c.eval.probes_per_polarity < 1) throw ConfigError("eval.probes_per_polarity must be >= 1");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.bench.n_scenes < 1) throw ConfigError("bench.n_scenes must be >= 1");
  if (c.judge.parallelism < 1 || c.judge.max_retries < 0 || c.judge.n_pairs < 1)
    throw ConfigError("judge: parallelism and n_pairs must be >= 1, max_retries >= 0");
  for (const auto* axis : {&c.sweep.alpha, &c.sweep.beta, &c.sweep.keep_ratio})
    if (axis->empty()) throw ConfigError("sweep axes must be non-empty");
  if (c.sweep.layer_i.empty()) throw ConfigError("sweep axes must be non-empty");
  return c;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json* node = &j;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key: " + path);
    node = &(*node)[part];
  }
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    v = raw;
  }
  *node = v;
}

nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = default_config_json();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    nlohmann::json user;
    try {
      is >> user;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    parse_config(user);  // key check
    j.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return j;
}

Experiment build_experiment(const ExperimentConfig& cfg) {
  World world = gen_world(cfg.world.n_objects, cfg.world.sparsity, derive_seed(cfg.seed, "world"));
  std::vector<Scene> scenes;
  if (!cfg.world.scenes_file.empty()) {
    scenes = read_scenes_jsonl(world, cfg.world.scenes_file);
    if (static_cast<int>(scenes.size()) > cfg.world.n_scenes) scenes.resize(cfg.world.n_scenes);
  } else {
    if (cfg.world.objects_per_scene < 1 || cfg.world.objects_per_scene > cfg.world.n_objects)
      throw ConfigError("world.objects_per_scene must lie in [1, n_objects]");
    scenes = gen_scenes(world, cfg.world.n_scenes, cfg.world.objects_per_scene, derive_seed(cfg.seed, "scenes"));
  }
  nlohmann::json mj = cfg.model;
  const bool derive = !mj.contains("seed") || mj.at("seed").is_null();
  mj.erase("seed");
  ModelConfig mc;
  try {
    mc = mj.get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  mc.seed = derive ? derive_seed(cfg.seed, "model") : cfg.model.at("seed").get<std::uint64_t>();
  mc.vocab = world.vocab;
  mc.validate();
  return Experiment{cfg, std::move(world), std::move(scenes), build_model(mc)};
}

std::vector<DecodeConfig> strategy_configs(const ExperimentConfig& cfg) {
  std::vector<DecodeConfig> out;
  for (auto s : cfg.strategies) {
    DecodeConfig c = cfg.decode;
    c.strategy = s;
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------- subcommands

namespace {

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out);
  return (fs::path(cfg.out) / name).string();
}

EvalOptions eval_options(const ExperimentConfig& cfg) {
  return {cfg.eval.probes_per_polarity, cfg.workers, cfg.eval.use_cache};
}

void validate_all(const Experiment& ex, const std::vector<DecodeConfig>& cs) {
  for (const auto& c : cs) c.validate(ex.model.config());
}

int cmd_pope(const Experiment& ex, std::ostream& out) {
  auto cs = strategy_configs(ex.cfg);
  validate_all(ex, cs);
  std::vector<PopeRow> rows;
  for (auto setting : ex.cfg.eval.settings) {
    auto r = eval_pope(ex.model, ex.world, ex.scenes, setting, cs, ex.cfg.seed, eval_options(ex.cfg));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_scenes_jsonl(ex.world, ex.scenes, out_path(ex.cfg, "scenes.jsonl"));
  const auto path = out_path(ex.cfg, "pope.csv");
  write_report(rows, path, ReportFormat::kCsv);
  for (const auto& r : rows)
    out << to_string(r.setting) << " " << to_string(r.decode.strategy) << " accuracy=" << r.result.accuracy
        << " f1=" << r.result.f1 << "\n";
  out << "wrote " << path << "\n";
  return 0;
}

int cmd_chair(const Experiment& ex, std::ostream& out) {
  auto cs = strategy_configs(ex.cfg);
  validate_all(ex, cs);
  std::vector<std::vector<Caption>> caps;
  auto rows = eval_chair(ex.model, ex.world, ex.scenes, cs, ex.cfg.seed, eval_options(ex.cfg), &caps);
  write_scenes_jsonl(ex.world, ex.scenes, out_path(ex.cfg, "scenes.jsonl"));
  const auto path = out_path(ex.cfg, "chair.csv");
  write_report(rows, path, ReportFormat::kCsv);
  std::ofstream cj(out_path(ex.cfg, "captions.jsonl"), std::ios::binary | std::ios::trunc);
  for (std::size_t c = 0; c < cs.size(); ++c)
    for (const auto& cap : caps[c]) {
      nlohmann::ordered_json line;
      line["strategy"] = to_string(cs[c].strategy);
      line["scene"] = cap.scene_id;
      line["objects"] = caption_objects(ex.world.vocab, cap.tokens);
      cj << line.dump() << "\n";
    }
  for (const auto& r : rows)
    out << to_string(r.decode.strategy) << " chair_s=" << r.result.chair_s << " chair_i=" << r.result.chair_i
        << "\n";
  out << "wrote " << path << "\n";
  return 0;
}

int cmd_bench(const Experiment& ex, std::ostream& out) {
  auto cs = strategy_configs(ex.cfg);
  validate_all(ex, cs);
  std::vector<Scene> sub(ex.scenes.begin(),
                         ex.scenes.begin() + std::min<std::size_t>(ex.scenes.size(), ex.cfg.bench.n_scenes));
  auto prof = efficiency_profile(ex.model, sub, cs);
  if (!ex.cfg.bench.wall_time)
    for (auto& e : prof.entries) e.wall_ms = 0.0;
  const auto path = out_path(ex.cfg, "efficiency.json");
  write_report(prof, path, ReportFormat::kJson);
  for (const auto& e : prof.entries) out << e.strategy << " mac_ratio=" << e.mac_ratio << "\n";
  out << "wrote " << path << "\n";
  return 0;
}

int cmd_sweep(const Experiment& ex, std::ostream& out) {
  const auto& s = ex.cfg.sweep;
  std::vector<DecodeConfig> grid;
  for (auto st : s.strategies)
    for (double a : s.alpha)
      for (double b : s.beta)
        for (int l : s.layer_i)
          for (double r : s.keep_ratio) {
            DecodeConfig c = ex.cfg.decode;
            c.strategy = st;
            c.alpha = a;
            c.beta = b;
            c.layer_i = l;
            c.keep_ratio = r;
            grid.push_back(c);
          }
  validate_all(ex, grid);
  std::vector<PopeRow> rows;
  for (auto setting : ex.cfg.eval.settings) {
    auto r = eval_pope(ex.model, ex.world, ex.scenes, setting, grid, ex.cfg.seed, eval_options(ex.cfg));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto path = out_path(ex.cfg, "sweep.csv");
  write_report(rows, path, ReportFormat::kCsv);
  out << rows.size() << " grid rows\nwrote " << path << "\n";
  return 0;
}

int cmd_inspect(const Experiment& ex, std::ostream& out) {
  auto cs = strategy_configs(ex.cfg);
  validate_all(ex, cs);
  const Scene* scene = nullptr;
  for (const auto& s : ex.scenes)
    if (s.id == ex.cfg.inspect.scene) scene = &s;
  if (!scene) throw ConfigError("inspect.scene " + std::to_string(ex.cfg.inspect.scene) + " does not exist");
  const auto vision = embed_scene(*scene, ex.model);
  TokenStream stream;
  if (ex.cfg.inspect.object.empty()) {
    stream = caption_stream(vision);
  } else {
    int obj = 0;
    try {
      obj = ex.world.vocab.object_of(ex.world.vocab.token_of(ex.cfg.inspect.object));
    } catch (const VocabularyError& e) {
      throw ConfigError(e.what());
    }
    stream = query_stream(ex.model, vision, obj);
  }
  const auto path = out_path(ex.cfg, "inspect.jsonl");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ReferenceBackend backend(ex.model);
  for (auto c : cs) {
    c.seed = derive_seed(ex.cfg.seed ^ c.seed, "decode", static_cast<std::uint64_t>(scene->id));
    if (!ex.cfg.inspect.object.empty()) c.max_new_tokens = 1;
    const Generation g = generate(backend, stream, c);
    for (const auto& step : g.steps) {
      nlohmann::json j = to_json(step);
      j["strategy"] = to_string(c.strategy);
      j["scene"] = scene->id;
      j["token_name"] = ex.world.vocab.token_name(step.token);
      os << j.dump() << "\n";
    }
    out << to_string(c.strategy) << ":";
    for (int t : g.tokens) out << " " << ex.world.vocab.token_name(t);
    out << "\n";
  }
  out << "wrote " << path << "\n";
  return 0;
}

std::string caption_text(const std::vector<std::string>& objects) {
  if (objects.empty()) return "An image.";
  std::string s = "An image with ";
  for (std::size_t i = 0; i < objects.size(); ++i) s += (i ? ", " : "") + objects[i];
  return s + ".";
}

int cmd_judge(const Experiment& ex, std::ostream& out) {
  auto cs = strategy_configs(ex.cfg);
  if (cs.size() < 2) throw ConfigError("judge needs two strategies to compare");
  cs.resize(2);
  validate_all(ex, cs);
  std::string tmpl = kDefaultJudgeTemplate;
  if (!ex.cfg.judge.template_file.empty()) {
    std::ifstream is(ex.cfg.judge.template_file);
    if (!is) throw ConfigError("cannot open judge template: " + ex.cfg.judge.template_file);
    tmpl.assign(std::istreambuf_iterator<char>(is), {});
  }
  JudgeEndpoint ep = JudgeEndpoint::from_env();
  ep.model = ex.cfg.judge.model;
  ep.temperature = ex.cfg.judge.temperature;
  ep.max_retries = ex.cfg.judge.max_retries;
  ep.backoff_ms = ex.cfg.judge.backoff_ms;

  std::vector<Scene> sub(ex.scenes.begin(),
                         ex.scenes.begin() + std::min<std::size_t>(ex.scenes.size(), ex.cfg.judge.n_pairs));
  std::vector<std::vector<Caption>> caps;
  eval_chair(ex.model, ex.world, sub, cs, ex.cfg.seed, eval_options(ex.cfg), &caps);
  std::vector<JudgeRequest> reqs;
  for (std::size_t i = 0; i < sub.size(); ++i) {
    std::vector<std::string> present;
    for (int o : sub[i].present) present.push_back(ex.world.vocab.objects()[o]);
    reqs.push_back({caption_text(present), caption_text(caption_objects(ex.world.vocab, caps[0][i].tokens)),
                    caption_text(caption_objects(ex.world.vocab, caps[1][i].tokens)), "default"});
  }
  auto scores = judge_batch(ep, reqs, tmpl, ex.cfg.judge.parallelism, ex.cfg.judge.swap, ex.cfg.judge.timeout_s);
  const auto path = out_path(ex.cfg, "judge.csv");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << "scene,strategy_a,strategy_b,correctness_a,detailedness_a,correctness_b,detailedness_b,retries\n";
  double ca = 0, da = 0, cb = 0, db = 0;
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const auto& s = scores[i];
    os << sub[i].id << "," << to_string(cs[0].strategy) << "," << to_string(cs[1].strategy) << ","
       << s.correctness_a << "," << s.detailedness_a << "," << s.correctness_b << "," << s.detailedness_b << ","
       << s.retries << "\n";
    ca += s.correctness_a;
    da += s.detailedness_a;
    cb += s.correctness_b;
    db += s.detailedness_b;
  }
  const double n = static_cast<double>(sub.size());
  out << to_string(cs[0].strategy) << " correctness=" << ca / n << " detailedness=" << da / n << "\n"
      << to_string(cs[1].strategy) << " correctness=" << cb / n << " detailedness=" << db / n << "\n"
      << "wrote " << path << "\n";
  return 0;
}

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::vector<std::string> strategies;
  std::optional<double> alpha, beta, keep_ratio;
  std::optional<int> layer, scenes, max_new_tokens;
  std::vector<std::string> settings;
  std::vector<std::string> overrides;
};

void add_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON experiment config");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--strategy", f.strategies, "decoding strategy (repeatable)")
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app->add_option("--alpha", f.alpha, "contrast strength");
  app->add_option("--beta", f.beta, "plausibility cutoff");
  app->add_option("--layer", f.layer, "pruning layer");
  app->add_option("--keep-ratio", f.keep_ratio, "fraction of vision tokens kept");
  app->add_option("--setting", f.settings, "POPE setting (repeatable)")
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app->add_option("--scenes", f.scenes, "number of scenes");
  app->add_option("--max-new-tokens", f.max_new_tokens, "caption length cap");
  app->add_option("overrides", f.overrides, "dotted overrides, e.g. decode.alpha=0.5");
}

// Flags become overrides applied after the config file and before positional ones.
std::vector<std::string> flag_overrides(const Flags& f, bool sweep) {
  std::vector<std::string> o;
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  if (f.out) o.push_back("out=" + nlohmann::json(*f.out).dump());
  if (f.seed) o.push_back("seed=" + std::to_string(*f.seed));
  if (f.workers) o.push_back("workers=" + std::to_string(*f.workers));
  if (!f.strategies.empty()) o.push_back((sweep ? "sweep.strategies=" : "strategies=") + nlohmann::json(f.strategies).dump());
  if (f.alpha) o.push_back(sweep ? "sweep.alpha=[" + num(*f.alpha) + "]" : "decode.alpha=" + num(*f.alpha));
  if (f.beta) o.push_back(sweep ? "sweep.beta=[" + num(*f.beta) + "]" : "decode.beta=" + num(*f.beta));
  if (f.layer) o.push_back(sweep ? "sweep.layer_i=[" + std::to_string(*f.layer) + "]" : "decode.layer_i=" + std::to_string(*f.layer));
  if (f.keep_ratio)
    o.push_back(sweep ? "sweep.keep_ratio=[" + num(*f.keep_ratio) + "]" : "decode.keep_ratio=" + num(*f.keep_ratio));
  if (!f.settings.empty()) o.push_back("eval.settings=" + nlohmann::json(f.settings).dump());
  if (f.scenes) o.push_back("world.n_scenes=" + std::to_string(*f.scenes));
  if (f.max_new_tokens) o.push_back("decode.max_new_tokens=" + std::to_string(*f.max_new_tokens));
  o.insert(o.end(), f.overrides.begin(), f.overrides.end());
  return o;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Experiments with a toy vision-language decoder"};
  app.require_subcommand(1);
  Flags flags;
  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Experiment&, std::ostream&);
  };
  const Cmd cmds[] = {
      {"pope", "object-probe accuracy per strategy", cmd_pope},
      {"chair", "caption hallucination rates per strategy", cmd_chair},
      {"bench", "counted MACs and wall time per strategy", cmd_bench},
      {"sweep", "POPE over a grid of decoding parameters", cmd_sweep},
      {"inspect", "per-step diagnostics for one scene as JSONL", cmd_inspect},
      {"judge", "score caption pairs with an external judge", cmd_judge},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : cmds) {
    auto* s = app.add_subcommand(c.name, c.help);
    add_flags(s, flags);
    subs.push_back(s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::size_t which = 0;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) which = i;

  std::optional<Experiment> ex;
  try {
    const bool sweep = std::string(cmds[which].name) == "sweep";
    const auto j = load_config(flags.config, flag_overrides(flags, sweep));
    ex.emplace(build_experiment(parse_config(j)));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    return cmds[which].fn(*ex, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sidlab
