#include "steered/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "steered/datasets.hpp"
#include "steered/error.hpp"
#include "steered/metrics.hpp"
#include "steered/ngram.hpp"
#include "steered/remote.hpp"

namespace steered::pipeline {

namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) fail(ErrorKind::usage, std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail(ErrorKind::usage, std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::usage, std::string("field '") + key + "' has the wrong type");
  }
}

std::optional<std::string> get_opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) fail(ErrorKind::usage, std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

std::string require_string(const json& j, const char* key) {
  auto v = get_opt_string(j, key);
  if (!v) fail(ErrorKind::usage, std::string("missing required field '") + key + "'");
  return *v;
}

/// Loads each referenced model once; shared by every provider built from it.
class ProviderCache {
 public:
  explicit ProviderCache(const RunConfig& config) : config_(config) {}

  ProviderPtr resolve(const std::string& ref) {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(ref); it != cache_.end()) return it->second;
    ProviderPtr provider;
    if (is_remote_url(ref)) {
      provider = std::make_shared<RemoteProvider>(handshake(ref, config_.timeout_ms));
    } else if (ref == "uniform") {
      provider = uniform_provider(vocab());
    } else {
      provider = std::make_shared<NGramModel>(NGramModel::load(ref, vocab()));
    }
    cache_.emplace(ref, provider);
    return provider;
  }

  std::shared_ptr<const Vocabulary> vocab() {
    if (!vocab_) {
      if (!config_.vocab) fail(ErrorKind::usage, "a vocabulary file is required for local models");
      vocab_ = std::make_shared<const Vocabulary>(Vocabulary::load(*config_.vocab));
    }
    return vocab_;
  }

 private:
  const RunConfig& config_;
  std::mutex mutex_;
  std::map<std::string, ProviderPtr> cache_;
  std::shared_ptr<const Vocabulary> vocab_;
};

std::string base_ref(const RunConfig& config) {
  if (config.base) return *config.base;
  if (const char* env = std::getenv(kEndpointEnv); env && *env) return env;
  fail(ErrorKind::usage, std::string("no base provider: set \"base\" or ") + kEndpointEnv);
}

bool uses_remote(const RunConfig& config) {
  if (is_remote_url(base_ref(config))) return true;
  for (const auto& s : config.signals) {
    if ((s.expert && is_remote_url(*s.expert)) || (s.anti_expert && is_remote_url(*s.anti_expert))) {
      return true;
    }
  }
  return false;
}

ProviderPtr build_with(ProviderCache& cache, const RunConfig& config) {
  ProviderPtr base = cache.resolve(base_ref(config));
  if (config.ensemble.mode == DebiasMode::none) return base;
  std::vector<SignalSpec> signals;
  for (const auto& ref : config.signals) {
    SignalSpec spec;
    if (ref.expert) spec.expert = cache.resolve(*ref.expert);
    if (ref.anti_expert) spec.anti_expert = cache.resolve(*ref.anti_expert);
    spec.weight = ref.weight;
    signals.push_back(std::move(spec));
  }
  return debiased_provider(std::move(base), std::move(signals), config.ensemble, uses_remote(config));
}

json ensemble_json(const RunConfig& config) {
  json e;
  e["alpha"] = config.ensemble.alpha;
  e["mode"] = std::string(to_string(config.ensemble.mode));
  e["signals"] = json::array();
  for (const auto& s : config.signals) {
    json sj;
    sj["expert"] = s.expert ? json(*s.expert) : json(nullptr);
    sj["anti_expert"] = s.anti_expert ? json(*s.anti_expert) : json(nullptr);
    sj["weight"] = s.weight;
    e["signals"].push_back(sj);
  }
  return e;
}

json config_echo(const RunConfig& config, const std::vector<std::string>& datasets) {
  json echo = to_json(config);
  echo["datasets"] = json::object();
  for (const auto& path : datasets) echo["datasets"][path] = fingerprint_hex(file_fingerprint(path));
  return echo;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::vector<PromptItem> load_prompt_items(const fs::path& path) {
  std::vector<PromptItem> items;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json r;
    try {
      r = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::data, where + ": invalid JSON (" + e.what() + ")");
    }
    if (!r.is_object() || !r.contains("prompt") || !r["prompt"].is_string()) {
      fail(ErrorKind::data, where + ": missing string field 'prompt'");
    }
    PromptItem item{r["prompt"].get<std::string>(), std::nullopt};
    if (r.contains("group") && r["group"].is_string()) item.group = r["group"].get<std::string>();
    items.push_back(std::move(item));
  }
  if (items.empty()) fail(ErrorKind::data, path.string() + ": no prompts");
  return items;
}

fs::path alpha_suffixed(const fs::path& out, double alpha) {
  fs::path p = out;
  const auto ext = out.extension().string();
  p.replace_filename(out.stem().string() + ".alpha" + format_number(alpha) + ext);
  return p;
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  return fs::path(path.string() + suffix);
}

std::vector<std::string> text_documents(const fs::path& path) {
  std::vector<std::string> docs;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  const bool jsonl = path.extension() == ".jsonl";
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!jsonl) {
      docs.push_back(line);
      continue;
    }
    json r;
    try {
      r = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": invalid JSON (" +
                                e.what() + ")");
    }
    for (const char* key : {"text", "prompt", "context", "stereo", "anti", "unrelated",
                            "context_a", "context_b", "continuation"}) {
      if (!r.contains(key) || !r[key].is_string()) continue;
      std::string value = r[key].get<std::string>();
      if (std::string_view(key) == "context") {
        if (auto pos = value.find(kBlank); pos != std::string::npos) value.replace(pos, kBlank.size(), " ");
      }
      docs.push_back(std::move(value));
    }
  }
  return docs;
}

json shift_report_json(const ShiftReport& report) {
  json j;
  j["prompt"] = report.prompt;
  j["rows"] = json::array();
  for (const auto& r : report.rows) {
    json row;
    row["token"] = r.token;
    row["id"] = r.id;
    row["base_prob"] = r.base_prob;
    row["debiased_prob"] = r.debiased_prob;
    row["shift"] = r.shift();
    row["signal"] = r.signal;
    row["rank_before"] = r.rank_before;
    row["rank_after"] = r.rank_after;
    j["rows"].push_back(row);
  }
  return j;
}

EvalReport eval_stereoset(const DistributionProvider& provider,
                          const std::vector<StereoTriple>& triples) {
  const auto result = stereoset_eval(provider, triples);
  EvalReport report;
  report.metric = "stereoset";
  std::set<std::string> dirs;
  for (const auto& t : triples) dirs.insert(t.direction);
  report.direction = dirs.size() == 1 ? *dirs.begin() : "full";
  report.values["ss"] = result.ss;
  report.values["lm_score"] = result.lm_score;
  report.aggregate = result.ss;
  report.sample_count = result.evaluated;
  report.excluded = result.excluded.size();
  return report;
}

}  // namespace

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void apply_ensemble_json(RunConfig& config, const json& e) {
  check_keys(e, {"alpha", "mode", "signals"}, "ensemble config");
  config.ensemble.alpha = get_or<double>(e, "alpha", config.ensemble.alpha);
  if (auto mode = get_opt_string(e, "mode")) config.ensemble.mode = parse_debias_mode(*mode);
  if (e.contains("signals")) {
    if (!e["signals"].is_array()) fail(ErrorKind::usage, "ensemble 'signals' must be an array");
    config.signals.clear();
    for (const auto& s : e["signals"]) {
      check_keys(s, {"expert", "anti_expert", "weight"}, "signal");
      SignalRef ref{get_opt_string(s, "expert"), get_opt_string(s, "anti_expert"),
                    get_or<double>(s, "weight", 1.0)};
      if (!ref.expert && !ref.anti_expert) {
        fail(ErrorKind::usage, "a signal needs an expert, an anti-expert or both");
      }
      config.signals.push_back(std::move(ref));
    }
    if (!e.contains("mode") && !config.signals.empty() && config.ensemble.mode == DebiasMode::none) {
      config.ensemble.mode = DebiasMode::full;
    }
  }
}

RunConfig parse_run_config(const json& j) {
  RunConfig config;
  if (j.is_null()) {
    config.ensemble.mode = DebiasMode::none;
    return config;
  }
  check_keys(j, {"vocab", "base", "ensemble", "sampler", "timeout_ms", "threads", "datasets"},
             "run config");
  config.vocab = get_opt_string(j, "vocab");
  config.base = get_opt_string(j, "base");
  if (j.contains("ensemble")) apply_ensemble_json(config, j["ensemble"]);
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, {"top_p", "temperature", "max_new_tokens", "seed", "greedy"}, "sampler config");
    config.sampler.top_p = get_or<double>(s, "top_p", config.sampler.top_p);
    config.sampler.temperature = get_or<double>(s, "temperature", config.sampler.temperature);
    config.sampler.max_new_tokens = get_or<int>(s, "max_new_tokens", config.sampler.max_new_tokens);
    config.sampler.seed = get_or<std::uint64_t>(s, "seed", config.sampler.seed);
    config.sampler.greedy = get_or<bool>(s, "greedy", config.sampler.greedy);
  }
  const bool explicit_mode = j.contains("ensemble") && j["ensemble"].is_object() &&
                             j["ensemble"].contains("mode");
  if (config.signals.empty() && !explicit_mode) config.ensemble.mode = DebiasMode::none;
  config.timeout_ms = get_or<int>(j, "timeout_ms", config.timeout_ms);
  config.threads = get_or<unsigned>(j, "threads", config.threads);
  config.sampler.validate();
  if (config.timeout_ms <= 0) fail(ErrorKind::usage, "timeout_ms must be positive");
  if (!(config.ensemble.alpha >= 0.0)) fail(ErrorKind::usage, "alpha must be nonnegative");
  return config;
}

json to_json(const RunConfig& config) {
  json j;
  j["vocab"] = config.vocab ? json(*config.vocab) : json(nullptr);
  j["base"] = config.base ? json(*config.base) : json(nullptr);
  j["ensemble"] = ensemble_json(config);
  json s;
  s["top_p"] = config.sampler.top_p;
  s["temperature"] = config.sampler.temperature;
  s["max_new_tokens"] = config.sampler.max_new_tokens;
  s["seed"] = config.sampler.seed;
  s["greedy"] = config.sampler.greedy;
  j["sampler"] = s;
  j["timeout_ms"] = config.timeout_ms;
  j["threads"] = config.threads;
  return j;
}

ProviderPtr build_base_provider(const RunConfig& config) {
  ProviderCache cache(config);
  return cache.resolve(base_ref(config));
}

ProviderPtr build_provider(const RunConfig& config) {
  ProviderCache cache(config);
  return build_with(cache, config);
}

json generation_to_json(const Generation& g) {
  json j;
  j["prompt"] = g.prompt;
  j["group"] = g.group ? json(*g.group) : json(nullptr);
  j["continuation"] = g.continuation;
  j["ids"] = g.token_ids;
  j["seed"] = g.seed;
  return j;
}

std::vector<Generation> load_generations(const std::string& path) {
  std::vector<Generation> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const json r = json::parse(line);
      Generation g;
      g.prompt = r.at("prompt").get<std::string>();
      if (r.contains("group") && !r["group"].is_null()) g.group = r["group"].get<std::string>();
      g.continuation = r.at("continuation").get<std::string>();
      if (r.contains("ids")) g.token_ids = r["ids"].get<std::vector<TokenId>>();
      if (r.contains("seed")) g.seed = r["seed"].get<std::uint64_t>();
      out.push_back(std::move(g));
    } catch (const json::exception& e) {
      fail(ErrorKind::data, where + ": bad generation record (" + e.what() + ")");
    }
  }
  if (out.empty()) fail(ErrorKind::data, path + ": no generations");
  return out;
}

json run_build_vocab(const json& request) {
  check_keys(request, {"inputs", "min_count", "out"}, "build-vocab request");
  const auto inputs = get_or<std::vector<std::string>>(request, "inputs", {});
  if (inputs.empty()) fail(ErrorKind::usage, "build-vocab needs at least one input file");
  const int min_count = get_or<int>(request, "min_count", 1);
  const auto out = require_string(request, "out");
  std::vector<std::string> docs;
  for (const auto& path : inputs) {
    auto more = text_documents(path);
    docs.insert(docs.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  if (docs.empty()) fail(ErrorKind::data, "input files contain no text");
  const Vocabulary vocab = build_vocab(docs, min_count);
  vocab.save(out);
  json result;
  result["out"] = out;
  result["size"] = vocab.size();
  result["fingerprint"] = fingerprint_hex(vocab.fingerprint());
  result["documents"] = docs.size();
  return result;
}

json run_train(const json& request) {
  check_keys(request, {"corpus", "label", "direction", "vocab", "order", "k", "out",
                       "validation_out", "split_seed"},
             "train request");
  const auto corpus_path = require_string(request, "corpus");
  const auto vocab_path = require_string(request, "vocab");
  const auto out = require_string(request, "out");
  const int order = get_or<int>(request, "order", kDefaultOrder);
  const double k = get_or<double>(request, "k", kDefaultSmoothingK);
  if (order < 1) fail(ErrorKind::usage, "order must be >= 1");
  if (!(k > 0.0)) fail(ErrorKind::usage, "k must be > 0");

  std::optional<StereoLabel> label;
  if (auto l = get_opt_string(request, "label")) {
    label = parse_stereo_label(*l);
    if (!label) fail(ErrorKind::usage, "unknown label '" + *l + "'");
  }
  const auto direction = get_opt_string(request, "direction");

  json result;
  std::vector<std::string> sentences;
  LoadStats stats;
  if (fs::path(corpus_path).extension() == ".jsonl") {
    const auto corpus = load_labeled_corpus(corpus_path, label, direction, &stats);
    sentences = corpus.sentences;
    result["label"] = std::string(to_string(corpus.label));
    result["direction"] = corpus.direction;
  } else {
    sentences = text_documents(corpus_path);
    stats.records = sentences.size();
    if (sentences.empty()) fail(ErrorKind::data, corpus_path + ": empty corpus");
  }

  if (auto validation_out = get_opt_string(request, "validation_out")) {
    const auto seed = get_or<std::uint64_t>(request, "split_seed", 0);
    auto split = train_validation_split(sentences, seed);
    if (split.train.empty()) fail(ErrorKind::data, "training split is empty");
    std::string lines;
    for (const auto& s : split.validation) lines += s + "\n";
    write_text_file(*validation_out, lines);
    json manifest;
    manifest["seed"] = split.manifest.seed;
    manifest["train_fraction"] = split.manifest.train_fraction;
    manifest["train_count"] = split.manifest.train_count;
    manifest["validation_count"] = split.manifest.validation_count;
    manifest["source"] = corpus_path;
    write_json(with_suffix(*validation_out, ".manifest.json"), manifest);
    result["validation"] = manifest;
    sentences = std::move(split.train);
  }

  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::load(vocab_path));
  std::vector<std::vector<TokenId>> corpus;
  std::size_t tokens = 0;
  for (const auto& s : sentences) {
    corpus.push_back(tokenize(*vocab, s).ids);
    tokens += corpus.back().size();
  }
  const NGramModel model = train_ngram(corpus, order, k, vocab);
  model.save(out);

  std::size_t entries = 0;
  for (const auto& [ctx, c] : model.table()) entries += c.counts.size();
  result["out"] = out;
  result["order"] = order;
  result["k"] = k;
  result["sentences"] = sentences.size();
  result["tokens"] = tokens;
  result["duplicates"] = stats.duplicates;
  result["entries"] = entries;
  result["warnings"] = stats.warnings;
  return result;
}

json run_generate(const json& request) {
  check_keys(request, {"config", "prompts", "n", "out", "alphas"}, "generate request");
  RunConfig config = parse_run_config(request.contains("config") ? request["config"] : json());
  const auto prompts_path = require_string(request, "prompts");
  const auto out = require_string(request, "out");
  const int n = get_or<int>(request, "n", 5);
  if (n < 1) fail(ErrorKind::usage, "n must be >= 1");
  auto alphas = get_or<std::vector<double>>(request, "alphas", {});
  const bool sweep = !alphas.empty();
  if (!sweep) alphas.push_back(config.ensemble.alpha);

  const auto prompts = load_prompt_items(prompts_path);
  ProviderCache cache(config);
  json files = json::array();
  for (double alpha : alphas) {
    RunConfig run = config;
    run.ensemble.alpha = alpha;
    const ProviderPtr provider = build_with(cache, run);
    const BatchResult batch = generate_batch(*provider, prompts, n, run.sampler, run.threads);
    const fs::path path = sweep ? alpha_suffixed(out, alpha) : fs::path(out);
    std::string lines;
    for (const auto& g : batch.generations) lines += generation_to_json(g).dump() + "\n";
    write_text_file(path, lines);
    write_json(with_suffix(path, ".config.json"), config_echo(run, {prompts_path}));

    json entry;
    entry["path"] = path.string();
    entry["alpha"] = alpha;
    entry["records"] = batch.generations.size();
    entry["errors"] = json::array();
    for (const auto& e : batch.errors) {
      json ej;
      ej["prompt_index"] = e.prompt_index;
      ej["repeat"] = e.repeat;
      ej["kind"] = to_string(e.kind);
      ej["exit_code"] = exit_code(e.kind);
      ej["message"] = e.message;
      entry["errors"].push_back(ej);
    }
    files.push_back(entry);
  }
  json result;
  result["files"] = files;
  return result;
}

json run_inspect(const json& request) {
  check_keys(request, {"config", "prompt", "candidates", "out"}, "inspect request");
  const RunConfig config = parse_run_config(request.contains("config") ? request["config"] : json());
  const auto prompt = require_string(request, "prompt");
  const auto candidates = get_or<std::vector<std::string>>(request, "candidates", {});
  if (candidates.empty()) fail(ErrorKind::usage, "inspect needs at least one candidate");

  ProviderCache cache(config);
  const ProviderPtr base = cache.resolve(base_ref(config));
  const ProviderPtr debiased = build_with(cache, config);
  json result = shift_report_json(probability_shift(*base, *debiased, prompt, candidates));
  result["alpha"] = config.ensemble.alpha;
  result["mode"] = std::string(to_string(config.ensemble.mode));
  result["config"] = config_echo(config, {});
  if (auto out = get_opt_string(request, "out")) write_json(*out, result);
  return result;
}

json run_eval(const json& request) {
  check_keys(request, {"config", "which", "data", "lexicon", "out", "csv", "direction"},
             "eval request");
  const RunConfig config = parse_run_config(request.contains("config") ? request["config"] : json());
  const auto which = require_string(request, "which");
  const auto data = require_string(request, "data");
  std::vector<std::string> datasets{data};

  EvalReport report;
  if (which == "global") {
    const auto lexicon = get_opt_string(request, "lexicon");
    if (!lexicon) fail(ErrorKind::usage, "global evaluation needs a lexicon file");
    datasets.push_back(*lexicon);
    report = group_discrepancy(LexiconScorer::load(*lexicon), load_generations(data));
    report.direction = get_opt_string(request, "direction").value_or("");
  } else {
    const ProviderPtr provider = build_provider(config);
    if (which == "local") {
      std::vector<std::pair<std::string, std::string>> pairs;
      std::set<std::string> dirs;
      for (auto& p : load_context_pairs(data)) {
        pairs.emplace_back(p.context_a, p.context_b);
        dirs.insert(p.direction);
      }
      report.metric = "local:hellinger";
      report.direction = dirs.size() == 1 ? *dirs.begin() : "full";
      report.aggregate = local_bias(*provider, pairs);
      report.values["hellinger"] = report.aggregate;
      report.sample_count = pairs.size();
    } else if (which == "stereoset") {
      auto triples = load_stereoset(data);
      if (auto dir = get_opt_string(request, "direction")) {
        std::erase_if(triples, [&](const StereoTriple& t) { return t.direction != *dir; });
        if (triples.empty()) fail(ErrorKind::data, data + ": no triples for direction " + *dir);
      }
      report = eval_stereoset(*provider, triples);
    } else if (which == "ppl") {
      std::vector<std::vector<TokenId>> sentences;
      std::size_t tokens = 0;
      for (const auto& doc : text_documents(data)) {
        sentences.push_back(provider->tokenize(doc));
        tokens += sentences.back().size();
      }
      report.metric = "perplexity";
      report.aggregate = corpus_perplexity(*provider, sentences);
      report.values["ppl"] = report.aggregate;
      report.values["tokens"] = static_cast<double>(tokens);
      report.sample_count = sentences.size();
    } else {
      fail(ErrorKind::usage, "unknown evaluation '" + which + "' (expected local, stereoset, ppl or global)");
    }
  }
  report.config_json = config_echo(config, datasets).dump();
  const json result = json::parse(report_to_json(report));
  if (auto out = get_opt_string(request, "out")) write_text_file(*out, report_to_json(report));
  if (auto csv = get_opt_string(request, "csv")) write_text_file(*csv, report_to_csv(report));
  return result;
}

json run_eval_matrix(const json& request) {
  check_keys(request, {"config", "mitigations", "evaluations", "directions", "out_prefix"},
             "eval-matrix request");
  const RunConfig config = parse_run_config(request.contains("config") ? request["config"] : json());
  if (!request.contains("mitigations") || !request["mitigations"].is_array() ||
      request["mitigations"].empty()) {
    fail(ErrorKind::usage, "eval-matrix needs at least one mitigation setting");
  }
  if (!request.contains("evaluations") || !request["evaluations"].is_array()) {
    fail(ErrorKind::usage, "eval-matrix needs an 'evaluations' array");
  }

  std::vector<std::pair<std::string, RunConfig>> rows;
  for (const auto& m : request["mitigations"]) {
    check_keys(m, {"name", "ensemble"}, "mitigation");
    RunConfig row = config;
    if (m.contains("ensemble")) apply_ensemble_json(row, m["ensemble"]);
    rows.emplace_back(require_string(m, "name"), std::move(row));
  }
  std::map<std::string, std::string> datasets;
  std::vector<std::string> dataset_order;
  for (const auto& e : request["evaluations"]) {
    check_keys(e, {"direction", "data"}, "evaluation");
    auto dir = require_string(e, "direction");
    if (datasets.emplace(dir, require_string(e, "data")).second) dataset_order.push_back(dir);
  }
  const auto columns = get_or<std::vector<std::string>>(request, "directions", dataset_order);
  if (columns.empty()) fail(ErrorKind::usage, "eval-matrix needs at least one evaluation direction");
  for (const auto& c : columns) {
    if (!datasets.count(c)) fail(ErrorKind::data, "no evaluation dataset for direction '" + c + "'");
  }

  std::map<std::string, std::vector<StereoTriple>> triples;
  for (const auto& c : columns) triples.emplace(c, load_stereoset(datasets[c]));

  ProviderCache cache(config);
  std::vector<ProviderPtr> providers;
  for (const auto& [name, row] : rows) providers.push_back(build_with(cache, row));

  const std::size_t n_cells = rows.size() * columns.size();
  std::vector<EvalReport> cells(n_cells);
  std::vector<std::exception_ptr> errors(n_cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1)) {
      try {
        cells[i] = eval_stereoset(*providers[i / columns.size()], triples[columns[i % columns.size()]]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(n_cells)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  json result;
  result["rows"] = json::array();
  for (const auto& [name, row] : rows) result["rows"].push_back(name);
  result["columns"] = columns;
  result["ss"] = json::array();
  result["lm_score"] = json::array();
  result["cells"] = json::array();
  std::string grid = "mitigation";
  for (const auto& c : columns) grid += "," + c;
  grid += "\n";
  std::string plot = "mitigation,evaluation,ss,lm_score,evaluated\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    json ss_row = json::array(), lm_row = json::array();
    grid += rows[r].first;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = cells[r * columns.size() + c];
      const double ss = cell.values.at("ss");
      const double lm = cell.values.at("lm_score");
      ss_row.push_back(ss);
      lm_row.push_back(lm);
      json cj;
      cj["mitigation"] = rows[r].first;
      cj["evaluation"] = columns[c];
      cj["ss"] = ss;
      cj["lm_score"] = lm;
      cj["evaluated"] = cell.sample_count;
      cj["excluded"] = cell.excluded;
      result["cells"].push_back(cj);
      grid += "," + format_number(ss);
      plot += rows[r].first + "," + columns[c] + "," + format_number(ss) + "," + format_number(lm) +
              "," + std::to_string(cell.sample_count) + "\n";
    }
    grid += "\n";
    result["ss"].push_back(ss_row);
    result["lm_score"].push_back(lm_row);
  }
  std::vector<std::string> used;
  for (const auto& c : columns) used.push_back(datasets[c]);
  result["config"] = config_echo(config, used);
  result["mitigations"] = json::array();
  for (const auto& [name, row] : rows) {
    json m;
    m["name"] = name;
    m["ensemble"] = ensemble_json(row);
    result["mitigations"].push_back(m);
  }

  if (auto prefix = get_opt_string(request, "out_prefix")) {
    write_json(*prefix + ".json", result);
    write_text_file(*prefix + ".csv", grid);
    write_text_file(*prefix + ".plot.csv", plot);
    result["files"] = {*prefix + ".json", *prefix + ".csv", *prefix + ".plot.csv"};
  }
  return result;
}

}  // namespace steered::pipeline
