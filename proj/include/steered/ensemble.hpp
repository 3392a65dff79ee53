#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "steered/provider.hpp"

namespace steered {

enum class DebiasMode { none, full, expert_only, anti_only };

std::string_view to_string(DebiasMode mode) noexcept;
DebiasMode parse_debias_mode(std::string_view text);

struct EnsembleConfig {
  double alpha = 1.0;
  DebiasMode mode = DebiasMode::full;
};

/// One expert/anti-expert pair of the cascade. At least one side is set.
struct SignalSpec {
  ProviderPtr expert;
  ProviderPtr anti_expert;
  double weight = 1.0;
};

/// softmax(z + alpha (z_plus - z_minus)).
ProbVector combine_logits(const LogitVector& z, const LogitVector& z_plus,
                          const LogitVector& z_minus, double alpha);

/// normalize(p * (p_plus / p_minus)^alpha), entries floored at 1e-12.
ProbVector combine_product_form(const ProbVector& p, const ProbVector& p_plus,
                                const ProbVector& p_minus, double alpha);

/// Target model steered by a cascade of signals:
///
///   z~ = z + sum_s alpha w_s (z_s+ - z_s-)
///
/// expert_only drops every z_s- term, anti_only every z_s+ term, and none
/// returns the base logits untouched.
class DebiasedProvider final : public DistributionProvider {
 public:
  /// Checks every provider against the base vocabulary.
  DebiasedProvider(ProviderPtr base, std::vector<SignalSpec> signals, EnsembleConfig config,
                   bool concurrent_fanout = false);

  std::string name() const override;
  std::size_t vocab_size() const override { return base_->vocab_size(); }
  std::uint64_t vocab_fingerprint() const override { return base_->vocab_fingerprint(); }
  TokenId eos_id() const override { return base_->eos_id(); }
  LogitVector next_logits(std::span<const TokenId> context) const override;
  std::vector<TokenId> tokenize(std::string_view text) const override {
    return base_->tokenize(text);
  }
  std::string detokenize(std::span<const TokenId> ids) const override {
    return base_->detokenize(ids);
  }
  std::optional<TokenId> single_token(std::string_view token) const override {
    return base_->single_token(token);
  }

  /// The additive term sum_s alpha w_s (z_s+ - z_s-) alone.
  std::vector<double> signal(std::span<const TokenId> context) const;

  const ProviderPtr& base() const noexcept { return base_; }
  const EnsembleConfig& config() const noexcept { return config_; }

 private:
  ProviderPtr base_;
  std::vector<SignalSpec> signals_;
  EnsembleConfig config_;
  bool concurrent_;
};

ProviderPtr debiased_provider(ProviderPtr base, std::vector<SignalSpec> signals,
                              EnsembleConfig config, bool concurrent_fanout = false);

struct ShiftRow {
  std::string token;
  TokenId id = 0;
  double base_prob = 0;
  double debiased_prob = 0;
  /// Debiased minus base logit at this token, i.e. the signal component.
  double signal = 0;
  /// 1-based ranks over the whole vocabulary, ties by ascending id.
  std::size_t rank_before = 0;
  std::size_t rank_after = 0;

  double shift() const noexcept { return debiased_prob - base_prob; }
};

struct ShiftReport {
  std::string prompt;
  std::vector<ShiftRow> rows;
};

/// Next-token probabilities of each candidate before and after debiasing.
/// Unknown candidates raise a data error listing all of them.
ShiftReport probability_shift(const DistributionProvider& base,
                              const DistributionProvider& debiased, std::string_view prompt,
                              const std::vector<std::string>& candidates);

}  // namespace steered
