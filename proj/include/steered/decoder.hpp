#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "steered/error.hpp"
#include "steered/provider.hpp"

namespace steered {

/// SplitMix64. Each generation stream owns one; there is no global state.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

struct SamplerConfig {
  double top_p = 0.9;
  double temperature = 1.0;
  int max_new_tokens = 15;
  std::uint64_t seed = 0;
  bool greedy = false;

  void validate() const;
};

/// softmax(ln p / temperature); zero entries stay zero.
ProbVector apply_temperature(const ProbVector& dist, double temperature);

/// Smallest prefix of ids sorted by descending probability (ties by ascending
/// id) whose cumulative mass reaches top_p. Zero-probability ids are never
/// included.
std::vector<TokenId> nucleus(const ProbVector& dist, double top_p);

TokenId sample_next(const ProbVector& dist, const SamplerConfig& config, SplitMix64& rng);
/// Temperature is applied in logit space: softmax(z / temperature).
TokenId sample_next(const LogitVector& logits, const SamplerConfig& config, SplitMix64& rng);

struct Generation {
  std::string prompt;
  std::string continuation;
  std::vector<TokenId> token_ids;  // generated ids only
  std::optional<std::string> group;
  std::uint64_t seed = 0;
};

Generation generate(const DistributionProvider& provider, const std::string& prompt,
                    const SamplerConfig& config);
Generation generate(const DistributionProvider& provider, std::span<const TokenId> prompt_ids,
                    const SamplerConfig& config);

struct PromptItem {
  std::string text;
  std::optional<std::string> group;
};

struct BatchError {
  std::size_t prompt_index = 0;
  int repeat = 0;
  ErrorKind kind = ErrorKind::internal;
  std::string message;
};

struct BatchResult {
  /// Prompt-major order; failed items are absent.
  std::vector<Generation> generations;
  std::vector<BatchError> errors;
};

/// Seed of one batch item. Depends on the prompt text and group, the repeat
/// index and the occurrence index among identical prompts, never on the
/// prompt's position, so reordering prompts permutes outputs.
std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view prompt,
                          const std::optional<std::string>& group, std::size_t occurrence,
                          int repeat);

BatchResult generate_batch(const DistributionProvider& provider,
                           const std::vector<PromptItem>& prompts, int n_per_prompt,
                           const SamplerConfig& config, unsigned threads = 1);

}  // namespace steered
