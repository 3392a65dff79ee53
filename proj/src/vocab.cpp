#include "steered/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "steered/error.hpp"

namespace steered {

std::uint64_t fingerprint_tokens(std::span<const std::string> tokens) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](unsigned char byte) {
    hash ^= byte;
    hash *= 0x100000001b3ULL;
  };
  for (const auto& token : tokens) {
    for (unsigned char c : token) mix(c);
    mix('\n');
  }
  return hash;
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

std::optional<std::uint64_t> parse_fingerprint_hex(std::string_view text) {
  if (text.size() != 16) return std::nullopt;
  std::uint64_t value = 0;
  for (char c : text) {
    if (!std::isxdigit(static_cast<unsigned char>(c))) return std::nullopt;
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[0] != kUnkToken || tokens_[1] != kEosToken) {
    fail(ErrorKind::data, "vocabulary must start with <unk> and <eos>");
  }
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& token = tokens_[i];
    if (token.empty() || token.find('\n') != std::string::npos) {
      fail(ErrorKind::data, "invalid vocabulary token at id " + std::to_string(i));
    }
    if (!ids_.emplace(token, static_cast<TokenId>(i)).second) {
      fail(ErrorKind::data, "duplicate vocabulary token '" + token + "' at id " + std::to_string(i));
    }
  }
  fingerprint_ = fingerprint_tokens(tokens_);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  try {
    return Vocabulary(std::move(tokens));
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write vocabulary file " + path.string());
  for (const auto& token : tokens_) out << token << '\n';
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!contains(id)) {
    fail(ErrorKind::out_of_range, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                      std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  return find(token).value_or(kUnkId);
}

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      if (c == '<') {
        auto rest = text.substr(i, 5);
        std::string lowered(rest);
        std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (lowered == kUnkToken || lowered == kEosToken) {
          out.push_back(std::move(lowered));
          i += 4;
          continue;
        }
      }
      out.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

Vocabulary build_vocab(std::span<const std::string> corpora, int min_count) {
  if (corpora.empty()) fail(ErrorKind::usage, "build_vocab needs at least one document");
  if (min_count < 1) fail(ErrorKind::usage, "min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpora) {
    for (auto& token : normalize_tokens(doc)) {
      if (token == kUnkToken || token == kEosToken) continue;
      ++counts[std::move(token)];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, count] : counts) {
    if (count >= static_cast<std::size_t>(min_count)) kept.emplace_back(token, count);
  }
  if (kept.empty()) {
    fail(ErrorKind::data,
         "no token occurs at least min_count=" + std::to_string(min_count) + " times");
  }
  // counts is a std::map, so equal counts are already lexicographic.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(kUnkToken), std::string(kEosToken)};
  tokens.reserve(kept.size() + 2);
  for (auto& [token, count] : kept) tokens.push_back(std::move(token));
  return Vocabulary(std::move(tokens));
}

TokenSeq tokenize(const Vocabulary& vocab, std::string_view text) {
  TokenSeq seq;
  seq.vocab_fingerprint = vocab.fingerprint();
  for (const auto& token : normalize_tokens(text)) seq.ids.push_back(vocab.id_of(token));
  return seq;
}

std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace steered
