#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "steered/vocab.hpp"

namespace steered {

/// Unnormalized natural-log scores over a vocabulary. Every entry is finite.
struct LogitVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

/// A categorical distribution: entries >= 0 summing to 1 within 1e-9.
struct ProbVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kProbSumTolerance = 1e-9;

/// Max-subtracted softmax.
ProbVector softmax(std::span<const double> logits);
inline ProbVector softmax(const LogitVector& z) { return softmax(z.values); }

/// ln softmax(z), computed as z - logsumexp(z).
std::vector<double> log_softmax(std::span<const double> logits);
double logsumexp(std::span<const double> logits);

/// ln(max(p, 1e-12)) elementwise.
LogitVector floored_log(const ProbVector& p);

/// Throws data errors for NaN/inf entries.
void check_finite(const LogitVector& z, std::string_view what);
/// Throws data errors for negative/non-finite entries or a bad sum.
void check_distribution(const ProbVector& p, std::string_view what);

/// Next-token scorer: target model, expert and anti-expert all play this
/// role. Implementations are deterministic and safe for concurrent queries.
class DistributionProvider {
 public:
  virtual ~DistributionProvider() = default;

  virtual std::string name() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::uint64_t vocab_fingerprint() const = 0;
  virtual TokenId eos_id() const = 0;

  /// Logits for the token following `context`.
  virtual LogitVector next_logits(std::span<const TokenId> context) const = 0;

  virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;

  /// Id of a single whole-token string, if the provider has one.
  virtual std::optional<TokenId> single_token(std::string_view token) const = 0;
};

using ProviderPtr = std::shared_ptr<const DistributionProvider>;

/// Shared plumbing for providers backed by a local Vocabulary.
class VocabProvider : public DistributionProvider {
 public:
  explicit VocabProvider(std::shared_ptr<const Vocabulary> vocab);

  std::size_t vocab_size() const override { return vocab_->size(); }
  std::uint64_t vocab_fingerprint() const override { return vocab_->fingerprint(); }
  TokenId eos_id() const override { return kEosId; }
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::optional<TokenId> single_token(std::string_view token) const override;

  const Vocabulary& vocab() const noexcept { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& vocab_ptr() const noexcept { return vocab_; }

 protected:
  void check_context(std::span<const TokenId> context) const;

 private:
  std::shared_ptr<const Vocabulary> vocab_;
};

/// All-zero logits, i.e. the uniform distribution.
ProviderPtr uniform_provider(std::shared_ptr<const Vocabulary> vocab);

/// Exact-context lookup table of distributions with a fallback row.
/// Returns ln(row) with zero entries floored at 1e-12.
ProviderPtr table_provider(std::shared_ptr<const Vocabulary> vocab,
                           std::map<std::vector<TokenId>, ProbVector> rows,
                           ProbVector fallback);

/// Succeeds iff both providers share vocabulary size and fingerprint;
/// otherwise throws an incompatible error naming both fingerprints.
void assert_compatible(const DistributionProvider& a, const DistributionProvider& b);

}  // namespace steered
