#pragma once

// Command layer behind the C API and the CLI. Every command takes a JSON
// request and returns a JSON result; see README for the schemas.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steered/decoder.hpp"
#include "steered/ensemble.hpp"
#include "steered/provider.hpp"

namespace steered::pipeline {

using json = nlohmann::ordered_json;

inline constexpr const char* kEndpointEnv = "STEERED_DECODE_ENDPOINT";

struct SignalRef {
  std::optional<std::string> expert;
  std::optional<std::string> anti_expert;
  double weight = 1.0;
};

/// Everything needed to build the provider under evaluation.
struct RunConfig {
  std::optional<std::string> vocab;
  /// Model file, http(s) URL or "uniform". Falls back to the endpoint
  /// environment variable.
  std::optional<std::string> base;
  EnsembleConfig ensemble;
  std::vector<SignalRef> signals;
  SamplerConfig sampler;
  int timeout_ms = 10000;
  unsigned threads = 1;
};

RunConfig parse_run_config(const json& j);
json to_json(const RunConfig& config);

/// Loads the ensemble config file format {"alpha", "mode", "signals"}.
void apply_ensemble_json(RunConfig& config, const json& j);

/// Resolves references, checks vocabulary compatibility and wraps the base
/// provider in the debiasing ensemble.
ProviderPtr build_provider(const RunConfig& config);
ProviderPtr build_base_provider(const RunConfig& config);

json run_build_vocab(const json& request);
json run_train(const json& request);
json run_generate(const json& request);
json run_inspect(const json& request);
json run_eval(const json& request);
json run_eval_matrix(const json& request);

/// Shortest round-trip decimal ("0", "0.5", "2").
std::string format_number(double value);

json generation_to_json(const Generation& generation);
std::vector<Generation> load_generations(const std::string& path);

}  // namespace steered::pipeline
