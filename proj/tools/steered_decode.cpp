// steered-decode: command-line front end over the steered C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "steered/steered.h"

namespace {

using json = nlohmann::ordered_json;

constexpr int kUsageExit = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + ": invalid JSON (" + e.what() + ")");
  }
}

std::vector<double> parse_alpha_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad --alpha value '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--alpha needs at least one value");
  return out;
}

/// Flags that build or override the run configuration.
struct RunFlags {
  std::string config_path;
  std::string ensemble_path;
  std::string vocab;
  std::string base;
  std::string expert;
  std::string anti_expert;
  std::string alpha;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<double> top_p;
  std::optional<double> temperature;
  std::optional<int> max_new_tokens;
  bool greedy = false;
  std::optional<unsigned> threads;
  std::optional<int> timeout_ms;

  void add_to(CLI::App* app, bool alpha_list) {
    app->add_option("--config", config_path, "Run configuration JSON");
    app->add_option("--ensemble", ensemble_path, "Ensemble configuration JSON {alpha, mode, signals}");
    app->add_option("--vocab", vocab, "Vocabulary file");
    app->add_option("--base", base, "Base model file, endpoint URL or 'uniform'");
    app->add_option("--expert", expert, "Expert model (replaces configured signals)");
    app->add_option("--anti-expert", anti_expert, "Anti-expert model (replaces configured signals)");
    app->add_option("--alpha", alpha,
                    alpha_list ? "Steering strength; a comma list sweeps and suffixes outputs"
                               : "Steering strength");
    app->add_option("--mode", mode, "none, full, expert_only or anti_only");
    app->add_option("--seed", seed, "Sampling seed (default 0)");
    app->add_option("--top-p", top_p, "Nucleus mass (default 0.9)");
    app->add_option("--temperature", temperature, "Sampling temperature (default 1.0)");
    app->add_option("--max-new-tokens", max_new_tokens, "Generation length (default 15)");
    app->add_flag("--greedy", greedy, "Take the argmax instead of sampling");
    app->add_option("--threads", threads, "Worker threads");
    app->add_option("--timeout-ms", timeout_ms, "Remote request timeout");
  }

  json build(std::vector<double>* sweep) const {
    json config = config_path.empty() ? json::object() : read_json_file(config_path);
    if (!config.is_object()) throw UsageError(config_path + ": run config must be an object");
    config.erase("datasets");
    if (!ensemble_path.empty()) config["ensemble"] = read_json_file(ensemble_path);
    if (!vocab.empty()) config["vocab"] = vocab;
    if (!base.empty()) config["base"] = base;
    if (!config.contains("ensemble") || config["ensemble"].is_null()) config["ensemble"] = json::object();
    json& ensemble = config["ensemble"];
    if (!expert.empty() || !anti_expert.empty()) {
      json signal = json::object();
      if (!expert.empty()) signal["expert"] = expert;
      if (!anti_expert.empty()) signal["anti_expert"] = anti_expert;
      ensemble["signals"] = json::array({signal});
    }
    if (!mode.empty()) ensemble["mode"] = mode;
    if (!alpha.empty()) {
      const auto alphas = parse_alpha_list(alpha);
      if (alphas.size() > 1) {
        if (!sweep) throw UsageError("--alpha takes a single value for this command");
        *sweep = alphas;
      } else {
        ensemble["alpha"] = alphas.front();
      }
    }
    if (!config.contains("sampler") || config["sampler"].is_null()) config["sampler"] = json::object();
    json& sampler = config["sampler"];
    if (seed) sampler["seed"] = *seed;
    if (top_p) sampler["top_p"] = *top_p;
    if (temperature) sampler["temperature"] = *temperature;
    if (max_new_tokens) sampler["max_new_tokens"] = *max_new_tokens;
    if (greedy) sampler["greedy"] = true;
    if (threads) config["threads"] = *threads;
    if (timeout_ms) config["timeout_ms"] = *timeout_ms;
    return config;
  }
};

/// Runs a pipeline command through the C API; returns the exit code.
int call(sd_status (*command)(const char*, char**), const json& request, json& result) {
  char* out = nullptr;
  const sd_status status = command(request.dump().c_str(), &out);
  if (status != SD_OK) {
    std::cerr << "error (" << sd_status_name(status) << "): " << sd_last_error() << "\n";
    return sd_exit_code(status);
  }
  result = json::parse(out);
  sd_string_free(out);
  return 0;
}

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

void print_shift_table(const json& report) {
  std::printf("prompt: %s\n", report["prompt"].get<std::string>().c_str());
  std::printf("alpha: %s  mode: %s\n", fixed(report["alpha"].get<double>(), 3).c_str(),
              report["mode"].get<std::string>().c_str());
  std::printf("%-16s %8s %12s %12s %12s %10s %10s\n", "token", "id", "base", "debiased", "shift",
              "rank_base", "rank_deb");
  for (const auto& row : report["rows"]) {
    std::printf("%-16s %8d %12.6f %12.6f %+12.6f %10d %10d\n", row["token"].get<std::string>().c_str(),
                row["id"].get<int>(), row["base_prob"].get<double>(),
                row["debiased_prob"].get<double>(), row["shift"].get<double>(),
                row["rank_before"].get<int>(), row["rank_after"].get<int>());
  }
}

void print_report(const json& report) {
  std::cout << report["metric"].get<std::string>();
  if (report.contains("direction") && !report["direction"].get<std::string>().empty()) {
    std::cout << " [" << report["direction"].get<std::string>() << "]";
  }
  std::cout << "\n";
  if (report.contains("per_group")) {
    for (const auto& [group, value] : report["per_group"].items()) {
      std::cout << "  group " << group << ": " << fixed(value.get<double>(), 4) << "\n";
    }
  }
  for (const auto& [name, value] : report["values"].items()) {
    std::cout << "  " << name << ": " << fixed(value.get<double>(), 4) << "\n";
  }
  std::cout << "  aggregate: " << fixed(report["aggregate"].get<double>(), 4) << "\n";
  std::cout << "  samples: " << report["sample_count"] << "  excluded: " << report["excluded"] << "\n";
}

void print_matrix(const json& result) {
  const auto& columns = result["columns"];
  std::printf("%-20s", "mitigation \\ eval");
  for (const auto& c : columns) std::printf(" %10s", c.get<std::string>().c_str());
  std::printf("\n");
  for (std::size_t r = 0; r < result["rows"].size(); ++r) {
    std::printf("%-20s", result["rows"][r].get<std::string>().c_str());
    for (const auto& v : result["ss"][r]) std::printf(" %10.2f", v.get<double>());
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoding-time bias steering for language models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sd_version()));

  auto* build_vocab = app.add_subcommand("build-vocab", "Build a vocabulary from text or JSONL files");
  std::vector<std::string> vocab_inputs;
  int min_count = 1;
  std::string vocab_out;
  build_vocab->add_option("inputs", vocab_inputs, "Input files")->required();
  build_vocab->add_option("--min-count", min_count, "Drop tokens seen fewer times");
  build_vocab->add_option("-o,--out", vocab_out, "Output vocabulary file")->required();

  auto* train = app.add_subcommand("train", "Train an n-gram model from a corpus");
  std::string train_corpus, train_vocab, train_out, train_label, train_direction, train_validation;
  int order = 3;
  double k = 0.01;
  std::optional<std::uint64_t> split_seed;
  train->add_option("corpus", train_corpus, "Labeled JSONL corpus or plain text")->required();
  train->add_option("--vocab", train_vocab, "Vocabulary file")->required();
  train->add_option("-o,--out", train_out, "Output model file")->required();
  train->add_option("--order", order, "N-gram order (default 3)");
  train->add_option("-k,--smoothing", k, "Add-k smoothing constant (default 0.01)");
  train->add_option("--label", train_label, "Keep records with this label");
  train->add_option("--direction", train_direction, "Keep records with this direction");
  train->add_option("--validation-out", train_validation, "Hold out 10% of sentences to this file");
  train->add_option("--seed", split_seed, "Seed for the train/validation split");

  RunFlags gen_flags;
  auto* generate = app.add_subcommand("generate", "Sample continuations for a prompt set");
  std::string prompts_path, gen_out;
  int n = 5;
  generate->add_option("prompts", prompts_path, "Prompt JSONL file")->required();
  generate->add_option("-o,--out", gen_out, "Output generations JSONL")->required();
  generate->add_option("-n", n, "Samples per prompt (default 5)");
  gen_flags.add_to(generate, true);

  RunFlags inspect_flags;
  auto* inspect = app.add_subcommand("inspect", "Report probability shifts for candidate tokens");
  std::string inspect_prompt, inspect_out;
  std::vector<std::string> candidates;
  inspect->add_option("prompt", inspect_prompt, "Prompt text")->required();
  inspect->add_option("--candidates", candidates, "Candidate tokens")->required()->delimiter(',');
  inspect->add_option("-o,--out", inspect_out, "Write the JSON report here");
  inspect_flags.add_to(inspect, false);

  RunFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Run one evaluation");
  std::string which, eval_data, eval_out, eval_csv, lexicon, eval_direction;
  eval->add_option("which", which, "local, stereoset, ppl or global")
      ->required()
      ->check(CLI::IsMember({"local", "stereoset", "ppl", "global"}));
  eval->add_option("data", eval_data, "Dataset file")->required();
  eval->add_option("-o,--out", eval_out, "Write the JSON report here");
  eval->add_option("--csv", eval_csv, "Write a CSV report here");
  eval->add_option("--lexicon", lexicon, "Term weights for global evaluation");
  eval->add_option("--direction", eval_direction, "Restrict or tag the evaluated direction");
  eval_flags.add_to(eval, false);

  RunFlags matrix_flags;
  auto* matrix = app.add_subcommand("eval-matrix", "Stereotype scores across mitigation and evaluation directions");
  std::string matrix_request, matrix_prefix;
  std::vector<std::string> mitigations, evaluations;
  matrix->add_option("--request", matrix_request, "Matrix request JSON {mitigations, evaluations}");
  matrix->add_option("--mitigation", mitigations, "NAME or NAME=ENSEMBLE_JSON (repeatable)");
  matrix->add_option("--eval", evaluations, "DIRECTION=STEREOSET_JSONL (repeatable)");
  matrix->add_option("--out-prefix", matrix_prefix, "Write PREFIX.json, PREFIX.csv and PREFIX.plot.csv");
  matrix_flags.add_to(matrix, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageExit;
  }

  try {
    json request, result;
    if (*build_vocab) {
      request["inputs"] = vocab_inputs;
      request["min_count"] = min_count;
      request["out"] = vocab_out;
      if (int rc = call(sd_run_build_vocab, request, result)) return rc;
      std::cout << "wrote " << vocab_out << ": " << result["size"] << " tokens, fingerprint "
                << result["fingerprint"].get<std::string>() << "\n";
      return 0;
    }
    if (*train) {
      request["corpus"] = train_corpus;
      request["vocab"] = train_vocab;
      request["out"] = train_out;
      request["order"] = order;
      request["k"] = k;
      if (!train_label.empty()) request["label"] = train_label;
      if (!train_direction.empty()) request["direction"] = train_direction;
      if (!train_validation.empty()) request["validation_out"] = train_validation;
      if (split_seed) request["split_seed"] = *split_seed;
      if (int rc = call(sd_run_train, request, result)) return rc;
      std::cout << "wrote " << train_out << ": " << result["sentences"] << " sentences, "
                << result["tokens"] << " tokens\n";
      for (const auto& w : result["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
      return 0;
    }
    if (*generate) {
      std::vector<double> sweep;
      request["config"] = gen_flags.build(&sweep);
      request["prompts"] = prompts_path;
      request["n"] = n;
      request["out"] = gen_out;
      if (!sweep.empty()) request["alphas"] = sweep;
      if (int rc = call(sd_run_generate, request, result)) return rc;
      int rc = 0;
      for (const auto& f : result["files"]) {
        std::cout << "wrote " << f["path"].get<std::string>() << ": " << f["records"] << " records\n";
        for (const auto& e : f["errors"]) {
          std::cerr << "error (" << e["kind"].get<std::string>() << ") prompt " << e["prompt_index"]
                    << " repeat " << e["repeat"] << ": " << e["message"].get<std::string>() << "\n";
          rc = std::max(rc, e["exit_code"].get<int>());
        }
      }
      return rc;
    }
    if (*inspect) {
      request["config"] = inspect_flags.build(nullptr);
      request["prompt"] = inspect_prompt;
      request["candidates"] = candidates;
      if (!inspect_out.empty()) request["out"] = inspect_out;
      if (int rc = call(sd_run_inspect, request, result)) return rc;
      print_shift_table(result);
      return 0;
    }
    if (*eval) {
      request["config"] = eval_flags.build(nullptr);
      request["which"] = which;
      request["data"] = eval_data;
      if (!eval_out.empty()) request["out"] = eval_out;
      if (!eval_csv.empty()) request["csv"] = eval_csv;
      if (!lexicon.empty()) request["lexicon"] = lexicon;
      if (!eval_direction.empty()) request["direction"] = eval_direction;
      if (int rc = call(sd_run_eval, request, result)) return rc;
      print_report(result);
      return 0;
    }
    if (*matrix) {
      request = matrix_request.empty() ? json::object() : read_json_file(matrix_request);
      if (!request.is_object()) throw UsageError(matrix_request + ": request must be an object");
      json base_config = request.contains("config") ? request["config"] : json::object();
      if (!matrix_flags.config_path.empty()) base_config = read_json_file(matrix_flags.config_path);
      RunFlags flags = matrix_flags;
      flags.config_path.clear();
      json merged = flags.build(nullptr);
      for (const auto& [key, value] : merged.items()) {
        if (value.is_object() && base_config.contains(key) && base_config[key].is_object()) {
          base_config[key].update(value);
        } else if (!(value.is_object() && value.empty())) {
          base_config[key] = value;
        }
      }
      base_config.erase("datasets");
      request["config"] = base_config;
      for (const auto& m : mitigations) {
        json entry;
        const auto eq = m.find('=');
        entry["name"] = m.substr(0, eq);
        if (eq == std::string::npos) {
          entry["ensemble"] = {{"mode", "none"}};
        } else {
          entry["ensemble"] = read_json_file(m.substr(eq + 1));
        }
        request["mitigations"].push_back(entry);
      }
      for (const auto& e : evaluations) {
        const auto eq = e.find('=');
        if (eq == std::string::npos) throw UsageError("--eval expects DIRECTION=PATH, got '" + e + "'");
        request["evaluations"].push_back({{"direction", e.substr(0, eq)}, {"data", e.substr(eq + 1)}});
      }
      if (!matrix_prefix.empty()) request["out_prefix"] = matrix_prefix;
      if (int rc = call(sd_run_eval_matrix, request, result)) return rc;
      print_matrix(result);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error (usage): " << e.what() << "\n";
    return kUsageExit;
  }
  return kUsageExit;
}
