#include "steered/ngram.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "steered/error.hpp"

namespace steered {

namespace {

constexpr std::string_view kMagic = "steered-ngram 1";

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace

NGramModel::NGramModel(std::shared_ptr<const Vocabulary> vocab, int order, double k,
                       CountTable table)
    : VocabProvider(std::move(vocab)), order_(order), k_(k), table_(std::move(table)) {
  if (order_ < 1) fail(ErrorKind::usage, "n-gram order must be >= 1");
  if (!(k_ > 0.0) || !std::isfinite(k_)) fail(ErrorKind::usage, "smoothing k must be > 0");
}

std::string NGramModel::name() const {
  return "ngram(order=" + std::to_string(order_) + ",k=" + format_double(k_) + ")";
}

std::uint64_t NGramModel::count(std::span<const TokenId> context, TokenId token) const {
  auto it = table_.find(std::vector<TokenId>(context.begin(), context.end()));
  if (it == table_.end()) return 0;
  auto jt = it->second.counts.find(token);
  return jt == it->second.counts.end() ? 0 : jt->second;
}

std::uint64_t NGramModel::total(std::span<const TokenId> context) const {
  auto it = table_.find(std::vector<TokenId>(context.begin(), context.end()));
  return it == table_.end() ? 0 : it->second.total;
}

LogitVector NGramModel::next_logits(std::span<const TokenId> context) const {
  check_context(context);
  const std::size_t history = static_cast<std::size_t>(order_ - 1);
  std::vector<TokenId> padded(history, kEosId);
  padded.insert(padded.end(), context.begin(), context.end());

  const std::size_t vocab = vocab_size();
  const std::size_t shortest = order_ == 1 ? 0 : 1;
  for (std::size_t len = history + 1; len-- > shortest;) {
    std::vector<TokenId> suffix(padded.end() - static_cast<std::ptrdiff_t>(len), padded.end());
    auto it = table_.find(suffix);
    if (it == table_.end() || it->second.total == 0) continue;
    const double log_denominator =
        std::log(static_cast<double>(it->second.total) + k_ * static_cast<double>(vocab));
    LogitVector z{std::vector<double>(vocab, std::log(k_) - log_denominator)};
    for (const auto& [token, c] : it->second.counts) {
      z.values[static_cast<std::size_t>(token)] =
          std::log(static_cast<double>(c) + k_) - log_denominator;
    }
    return z;
  }
  return LogitVector{std::vector<double>(vocab, -std::log(static_cast<double>(vocab)))};
}

NGramModel train_ngram(std::span<const std::vector<TokenId>> corpus, int order, double k,
                       std::shared_ptr<const Vocabulary> vocab) {
  if (order < 1) fail(ErrorKind::usage, "n-gram order must be >= 1");
  if (!(k > 0.0)) fail(ErrorKind::usage, "smoothing k must be > 0");
  if (corpus.empty()) fail(ErrorKind::data, "cannot train an n-gram model on an empty corpus");
  if (!vocab) fail(ErrorKind::usage, "n-gram training needs a vocabulary");

  const std::size_t history = static_cast<std::size_t>(order - 1);
  NGramModel::CountTable table;
  std::vector<TokenId> padded;
  for (const auto& sequence : corpus) {
    padded.assign(history, kEosId);
    for (TokenId id : sequence) {
      if (!vocab->contains(id)) {
        fail(ErrorKind::out_of_range, "training token id " + std::to_string(id) +
                                          " outside vocabulary of size " +
                                          std::to_string(vocab->size()));
      }
      padded.push_back(id);
    }
    padded.push_back(kEosId);
    for (std::size_t i = history; i < padded.size(); ++i) {
      for (std::size_t len = 0; len <= history; ++len) {
        std::vector<TokenId> context(padded.begin() + static_cast<std::ptrdiff_t>(i - len),
                                     padded.begin() + static_cast<std::ptrdiff_t>(i));
        auto& entry = table[std::move(context)];
        ++entry.counts[padded[i]];
        ++entry.total;
      }
    }
  }
  return NGramModel(std::move(vocab), order, k, std::move(table));
}

LogitVector ngram_logits(const NGramModel& model, const TokenSeq& context) {
  if (context.vocab_fingerprint != model.vocab_fingerprint()) {
    fail(ErrorKind::incompatible, "context tokenized with vocabulary " +
                                      fingerprint_hex(context.vocab_fingerprint) +
                                      " but model uses " +
                                      fingerprint_hex(model.vocab_fingerprint()));
  }
  return model.next_logits(context.ids);
}

void NGramModel::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  std::size_t entries = 0;
  for (const auto& [context, stats] : table_) entries += stats.counts.size();
  out << kMagic << '\n'
      << "order " << order_ << '\n'
      << "k " << format_double(k_) << '\n'
      << "vocab_size " << vocab_size() << '\n'
      << "fingerprint " << fingerprint_hex(vocab_fingerprint()) << '\n'
      << "entries " << entries << '\n';
  for (const auto& [context, stats] : table_) {
    std::string ctx;
    for (std::size_t i = 0; i < context.size(); ++i) {
      if (i) ctx.push_back(' ');
      ctx += std::to_string(context[i]);
    }
    for (const auto& [token, c] : stats.counts) {
      out << ctx << '\t' << token << '\t' << c << '\n';
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::io, "cannot write model file " + path.string());
  file << out.str();
  if (!file) fail(ErrorKind::io, "failed writing " + path.string());
}

NGramModel NGramModel::load(const std::filesystem::path& path,
                            std::shared_ptr<const Vocabulary> vocab) {
  if (!vocab) fail(ErrorKind::usage, "loading an n-gram model needs its vocabulary");
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open model file " + path.string());

  std::size_t line_no = 0;
  std::string line;
  auto bad = [&](const std::string& why) -> void {
    fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  auto header = [&](std::string_view key) -> std::string {
    ++line_no;
    if (!std::getline(in, line)) bad("missing '" + std::string(key) + "' header");
    if (line.rfind(std::string(key) + " ", 0) != 0) bad("expected '" + std::string(key) + "'");
    return line.substr(key.size() + 1);
  };

  ++line_no;
  if (!std::getline(in, line) || line != kMagic) bad("not a steered n-gram model (bad header)");
  int order = 0;
  double k = 0;
  std::size_t vocab_size = 0, entries = 0;
  if (!parse_number(header("order"), order)) bad("bad order");
  if (!parse_number(header("k"), k)) bad("bad k");
  if (!parse_number(header("vocab_size"), vocab_size)) bad("bad vocab_size");
  auto fingerprint = parse_fingerprint_hex(header("fingerprint"));
  if (!fingerprint) bad("bad fingerprint");
  if (!parse_number(header("entries"), entries)) bad("bad entries");
  if (*fingerprint != vocab->fingerprint() || vocab_size != vocab->size()) {
    fail(ErrorKind::incompatible, path.string() + ": model vocabulary " +
                                      fingerprint_hex(*fingerprint) +
                                      " does not match supplied vocabulary " +
                                      fingerprint_hex(vocab->fingerprint()));
  }

  CountTable table;
  std::size_t read = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) bad("expected 'context TAB token TAB count'");
    std::vector<TokenId> context;
    std::istringstream ctx(line.substr(0, tab1));
    std::string piece;
    while (ctx >> piece) {
      TokenId id = 0;
      if (!parse_number(piece, id) || !vocab->contains(id)) bad("bad context id '" + piece + "'");
      context.push_back(id);
    }
    if (context.size() >= static_cast<std::size_t>(order)) bad("context longer than order-1");
    TokenId token = 0;
    std::uint64_t c = 0;
    if (!parse_number(std::string_view(line).substr(tab1 + 1, tab2 - tab1 - 1), token) ||
        !vocab->contains(token)) {
      bad("bad token id");
    }
    if (!parse_number(std::string_view(line).substr(tab2 + 1), c)) bad("bad count");
    auto& stats = table[std::move(context)];
    if (!stats.counts.emplace(token, c).second) bad("duplicate entry");
    stats.total += c;
    ++read;
  }
  if (read != entries) {
    fail(ErrorKind::data, path.string() + ": expected " + std::to_string(entries) +
                              " entries, found " + std::to_string(read));
  }
  return NGramModel(std::move(vocab), order, k, std::move(table));
}

}  // namespace steered
