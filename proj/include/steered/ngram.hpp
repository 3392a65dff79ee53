#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "steered/provider.hpp"

namespace steered {

inline constexpr double kDefaultSmoothingK = 0.01;
inline constexpr int kDefaultOrder = 3;

/// Add-k smoothed n-gram model with stupid backoff.
///
/// Each training sequence is padded with order-1 leading `<eos>` and one
/// trailing `<eos>`. Every window records its target under all context
/// suffixes of length 0..order-1.
///
/// Scoring pads the query context the same way, then walks context lengths
/// order-1 down to 1 and uses the first with a nonzero total:
///
///   P(w | c) = (count(c, w) + k) / (total(c) + k |V|)
///
/// When no such context exists the distribution is uniform. An order-1
/// model always scores with the empty context (unigram).
class NGramModel final : public VocabProvider {
 public:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> counts;
    friend bool operator==(const ContextCounts&, const ContextCounts&) = default;
  };
  using CountTable = std::map<std::vector<TokenId>, ContextCounts>;

  NGramModel(std::shared_ptr<const Vocabulary> vocab, int order, double k,
             CountTable table);

  std::string name() const override;
  LogitVector next_logits(std::span<const TokenId> context) const override;

  int order() const noexcept { return order_; }
  double k() const noexcept { return k_; }
  const CountTable& table() const noexcept { return table_; }

  std::uint64_t count(std::span<const TokenId> context, TokenId token) const;
  std::uint64_t total(std::span<const TokenId> context) const;

  /// Text format: header line, `order`, `k`, `vocab_size`, `fingerprint`,
  /// `entries`, then sorted `context-ids TAB token-id TAB count` lines.
  void save(const std::filesystem::path& path) const;
  /// Fails if the file's fingerprint differs from `vocab`.
  static NGramModel load(const std::filesystem::path& path,
                         std::shared_ptr<const Vocabulary> vocab);

 private:
  int order_;
  double k_;
  CountTable table_;
};

NGramModel train_ngram(std::span<const std::vector<TokenId>> corpus, int order, double k,
                       std::shared_ptr<const Vocabulary> vocab);

/// Checked scoring: the context must come from the model's vocabulary.
LogitVector ngram_logits(const NGramModel& model, const TokenSeq& context);

}  // namespace steered
