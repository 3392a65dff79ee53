#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "steered/provider.hpp"

namespace steered {

inline constexpr int kDefaultRemoteTimeoutMs = 10000;
inline constexpr int kRemoteRetries = 2;

/// A logit server whose vocabulary has been learned through the handshake.
/// Only handshake() constructs one, so no logit request can precede it.
class RemoteEndpoint {
 public:
  const std::string& base_url() const noexcept { return base_url_; }
  int timeout_ms() const noexcept { return timeout_ms_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  TokenId eos_id() const noexcept { return eos_id_; }

 private:
  friend RemoteEndpoint handshake(const std::string& url, int timeout_ms);
  RemoteEndpoint() = default;

  std::string base_url_;
  int timeout_ms_ = kDefaultRemoteTimeoutMs;
  std::size_t vocab_size_ = 0;
  std::uint64_t fingerprint_ = 0;
  TokenId eos_id_ = 0;
};

/// GET /v1/vocab. Network failures raise transport errors, malformed replies
/// protocol errors.
RemoteEndpoint handshake(const std::string& url, int timeout_ms = kDefaultRemoteTimeoutMs);

/// POST /v1/logits with the given request id. Retries transport failures up
/// to twice; validates the echoed id, the length and finiteness.
LogitVector remote_logits(const RemoteEndpoint& endpoint, std::span<const TokenId> context,
                          std::int64_t request_id);

/// POST /v1/tokenize.
std::vector<TokenId> remote_tokenize(const RemoteEndpoint& endpoint, std::string_view text);

class RemoteProvider final : public DistributionProvider {
 public:
  explicit RemoteProvider(RemoteEndpoint endpoint);

  std::string name() const override;
  std::size_t vocab_size() const override { return endpoint_.vocab_size(); }
  std::uint64_t vocab_fingerprint() const override { return endpoint_.fingerprint(); }
  TokenId eos_id() const override { return endpoint_.eos_id(); }
  LogitVector next_logits(std::span<const TokenId> context) const override;
  std::vector<TokenId> tokenize(std::string_view text) const override;
  /// Uses the optional POST /v1/detokenize extension when the server has it,
  /// otherwise renders ids as `[id]` tokens.
  std::string detokenize(std::span<const TokenId> ids) const override;
  std::optional<TokenId> single_token(std::string_view token) const override;

  const RemoteEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  RemoteEndpoint endpoint_;
  mutable std::atomic<std::int64_t> next_id_{1};
};

bool is_remote_url(std::string_view ref);

}  // namespace steered
