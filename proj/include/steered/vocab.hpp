#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace steered {

using TokenId = std::int32_t;

inline constexpr TokenId kUnkId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";

/// FNV-1a 64-bit over the concatenation of `token + '\n'` for each token in
/// order. Remote servers compute the same value over their own token list.
std::uint64_t fingerprint_tokens(std::span<const std::string> tokens);

std::string fingerprint_hex(std::uint64_t fingerprint);
std::optional<std::uint64_t> parse_fingerprint_hex(std::string_view text);

/// Token ids paired with the fingerprint of the vocabulary that produced them.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::uint64_t vocab_fingerprint = 0;
};

/// Immutable token inventory. Ids are contiguous, `<unk>` is 0 and `<eos>`
/// is 1.
class Vocabulary {
 public:
  /// Validates reserved tokens and distinctness.
  explicit Vocabulary(std::vector<std::string> tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Throws out_of_range for ids outside [0, size).
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  /// Unknown tokens map to `<unk>`.
  TokenId id_of(std::string_view token) const;

  bool contains(TokenId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::uint64_t fingerprint_ = 0;
};

/// Lowercases, splits on whitespace and splits every ASCII punctuation
/// character into its own token. The literal reserved tokens `<unk>` and
/// `<eos>` survive as single tokens.
std::vector<std::string> normalize_tokens(std::string_view text);

/// Tokens occurring at least `min_count` times, ordered by descending count
/// then lexicographically, after the two reserved tokens.
Vocabulary build_vocab(std::span<const std::string> corpora, int min_count);

TokenSeq tokenize(const Vocabulary& vocab, std::string_view text);
std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> ids);

}  // namespace steered
