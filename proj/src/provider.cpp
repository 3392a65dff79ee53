#include "steered/provider.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "steered/error.hpp"

namespace steered {

double logsumexp(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorKind::data, "logsumexp of an empty vector");
  const double max = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(max)) fail(ErrorKind::data, "logits have no finite maximum");
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max);
  return max + std::log(sum);
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorKind::data, "softmax of an empty vector");
  const double max = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(max)) fail(ErrorKind::data, "logits have no finite maximum");
  ProbVector p;
  p.values.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p.values[i] = std::exp(logits[i] - max);
    sum += p.values[i];
  }
  for (double& v : p.values) v /= sum;
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = logsumexp(logits);
  std::vector<double> out(logits.begin(), logits.end());
  for (double& v : out) v -= lse;
  return out;
}

LogitVector floored_log(const ProbVector& p) {
  LogitVector z;
  z.values.reserve(p.size());
  for (double v : p.values) z.values.push_back(std::log(std::max(v, kProbFloor)));
  return z;
}

void check_finite(const LogitVector& z, std::string_view what) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) {
      fail(ErrorKind::data, std::string(what) + ": non-finite logit at index " + std::to_string(i));
    }
  }
}

void check_distribution(const ProbVector& p, std::string_view what) {
  if (p.size() == 0) fail(ErrorKind::data, std::string(what) + ": empty distribution");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) {
      fail(ErrorKind::data, std::string(what) + ": invalid probability at index " + std::to_string(i));
    }
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    fail(ErrorKind::data, std::string(what) + ": probabilities sum to " + std::to_string(sum));
  }
}

VocabProvider::VocabProvider(std::shared_ptr<const Vocabulary> vocab) : vocab_(std::move(vocab)) {
  if (!vocab_) fail(ErrorKind::usage, "provider needs a vocabulary");
}

std::vector<TokenId> VocabProvider::tokenize(std::string_view text) const {
  return steered::tokenize(*vocab_, text).ids;
}

std::string VocabProvider::detokenize(std::span<const TokenId> ids) const {
  return steered::detokenize(*vocab_, ids);
}

std::optional<TokenId> VocabProvider::single_token(std::string_view token) const {
  auto tokens = normalize_tokens(token);
  if (tokens.size() != 1) return std::nullopt;
  return vocab_->find(tokens.front());
}

void VocabProvider::check_context(std::span<const TokenId> context) const {
  for (TokenId id : context) {
    if (!vocab_->contains(id)) {
      fail(ErrorKind::out_of_range, "context token id " + std::to_string(id) +
                                        " outside vocabulary of size " +
                                        std::to_string(vocab_->size()));
    }
  }
}

namespace {

class UniformProvider final : public VocabProvider {
 public:
  using VocabProvider::VocabProvider;

  std::string name() const override { return "uniform"; }

  LogitVector next_logits(std::span<const TokenId> context) const override {
    check_context(context);
    return LogitVector{std::vector<double>(vocab_size(), 0.0)};
  }
};

class TableProvider final : public VocabProvider {
 public:
  TableProvider(std::shared_ptr<const Vocabulary> vocab,
                std::map<std::vector<TokenId>, ProbVector> rows, ProbVector fallback)
      : VocabProvider(std::move(vocab)) {
    auto check_row = [this](const ProbVector& row, const std::string& what) {
      if (row.size() != vocab_size()) {
        fail(ErrorKind::data, what + " has length " + std::to_string(row.size()) +
                                  ", expected " + std::to_string(vocab_size()));
      }
      check_distribution(row, what);
    };
    check_row(fallback, "fallback row");
    fallback_ = floored_log(fallback);
    for (auto& [context, row] : rows) {
      check_row(row, "table row");
      rows_.emplace(context, floored_log(row));
    }
  }

  std::string name() const override { return "table"; }

  LogitVector next_logits(std::span<const TokenId> context) const override {
    check_context(context);
    auto it = rows_.find(std::vector<TokenId>(context.begin(), context.end()));
    return it == rows_.end() ? fallback_ : it->second;
  }

 private:
  std::map<std::vector<TokenId>, LogitVector> rows_;
  LogitVector fallback_;
};

}  // namespace

ProviderPtr uniform_provider(std::shared_ptr<const Vocabulary> vocab) {
  return std::make_shared<UniformProvider>(std::move(vocab));
}

ProviderPtr table_provider(std::shared_ptr<const Vocabulary> vocab,
                           std::map<std::vector<TokenId>, ProbVector> rows, ProbVector fallback) {
  return std::make_shared<TableProvider>(std::move(vocab), std::move(rows), std::move(fallback));
}

void assert_compatible(const DistributionProvider& a, const DistributionProvider& b) {
  if (a.vocab_fingerprint() != b.vocab_fingerprint() || a.vocab_size() != b.vocab_size()) {
    fail(ErrorKind::incompatible,
         "providers do not share a vocabulary: " + a.name() + " has fingerprint " +
             fingerprint_hex(a.vocab_fingerprint()) + " (|V|=" + std::to_string(a.vocab_size()) +
             "), " + b.name() + " has fingerprint " + fingerprint_hex(b.vocab_fingerprint()) +
             " (|V|=" + std::to_string(b.vocab_size()) + ")");
  }
}

}  // namespace steered
