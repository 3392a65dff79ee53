#include <doctest.h>

#include <algorithm>
#include <random>

#include "steered/error.hpp"
#include "steered/vocab.hpp"
#include "support/test_util.hpp"

using namespace steered;
using steered::testing::TempDir;

namespace {

std::vector<std::string> tokens_of(const Vocabulary& v) { return v.tokens(); }

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::internal;
}

}  // namespace

TEST_SUITE("vocab") {

TEST_CASE("build_vocab orders by count then lexicographically") {
  const std::vector<std::string> docs{"a b b"};
  CHECK(tokens_of(build_vocab(docs, 1)) == std::vector<std::string>{"<unk>", "<eos>", "b", "a"});
  CHECK(tokens_of(build_vocab(docs, 2)) == std::vector<std::string>{"<unk>", "<eos>", "b"});

  const std::vector<std::string> ties{"d c b a"};
  CHECK(tokens_of(build_vocab(ties, 1)) ==
        std::vector<std::string>{"<unk>", "<eos>", "a", "b", "c", "d"});
}

TEST_CASE("build_vocab rejects empty input and thresholds that drop everything") {
  CHECK(kind_of([] { build_vocab(std::vector<std::string>{}, 1); }) == ErrorKind::usage);
  const std::vector<std::string> docs{"a b"};
  try {
    build_vocab(docs, 5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("5") != std::string::npos);
  }
}

TEST_CASE("build_vocab is invariant to document order") {
  std::vector<std::string> docs{"the woman worked as a nurse .", "the man worked as a doctor .",
                                "a, b; c!", "nurse nurse doctor"};
  const auto reference = build_vocab(docs, 1);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(docs.begin(), docs.end(), rng);
    const auto v = build_vocab(docs, 1);
    CHECK(v == reference);
    CHECK(v.fingerprint() == reference.fingerprint());
  }
}

TEST_CASE("tokenize lowercases, splits punctuation and maps unknowns") {
  const std::vector<std::string> docs{"the woman worked as a , b"};
  const Vocabulary v = build_vocab(docs, 1);
  const auto seq = tokenize(v, "The woman worked as a");
  CHECK(seq.ids.size() == 5);
  CHECK(std::none_of(seq.ids.begin(), seq.ids.end(), [](TokenId id) { return id == kUnkId; }));
  CHECK(seq.vocab_fingerprint == v.fingerprint());

  CHECK(tokenize(v, "zzz").ids == std::vector<TokenId>{kUnkId});
  CHECK(normalize_tokens("a, b") == std::vector<std::string>{"a", ",", "b"});
  CHECK(normalize_tokens("Hello<eos>world <unk>") ==
        std::vector<std::string>{"hello", "<eos>", "world", "<unk>"});
  CHECK(normalize_tokens("  \t ").empty());
}

TEST_CASE("detokenize joins with spaces and checks ids") {
  const std::vector<std::string> docs{"a b"};
  const Vocabulary v = build_vocab(docs, 1);
  const std::vector<TokenId> ab{*v.find("a"), *v.find("b")};
  CHECK(detokenize(v, ab) == "a b");
  CHECK(detokenize(v, std::vector<TokenId>{}).empty());
  const std::vector<TokenId> bad{static_cast<TokenId>(v.size())};
  CHECK(kind_of([&] { detokenize(v, bad); }) == ErrorKind::out_of_range);
  const std::vector<TokenId> negative{-1};
  CHECK(kind_of([&] { detokenize(v, negative); }) == ErrorKind::out_of_range);
}

TEST_CASE("tokenize and detokenize round trip") {
  const std::vector<std::string> docs{"the woman worked as a nurse , she said .",
                                      "men are rational ! women are emotional ?"};
  const Vocabulary v = build_vocab(docs, 1);
  const std::vector<std::string> texts{"The woman, worked!", "zzz qqq nurse", "", "  a  b  ",
                                       "she said <eos> men <unk> are", "!!??..,,"};
  for (const auto& t : texts) {
    const auto once = tokenize(v, t).ids;
    CHECK(tokenize(v, detokenize(v, once)).ids == once);
  }

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<TokenId> pick(1, static_cast<TokenId>(v.size()) - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenId> ids(rng() % 12);
    for (auto& id : ids) id = pick(rng);
    CHECK(tokenize(v, detokenize(v, ids)).ids == ids);
  }
}

TEST_CASE("fingerprint is FNV-1a over newline-terminated tokens") {
  // Independent FNV-1a 64 over the byte string.
  auto fnv = [](const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  };
  const Vocabulary v({"<unk>", "<eos>", "a", "b"});
  CHECK(v.fingerprint() == fnv("<unk>\n<eos>\na\nb\n"));
  CHECK(fingerprint_hex(0xabcULL) == "0000000000000abc");
  CHECK(parse_fingerprint_hex("0000000000000abc") == 0xabcULL);
  CHECK_FALSE(parse_fingerprint_hex("abc").has_value());
  CHECK_FALSE(parse_fingerprint_hex("000000000000zabc").has_value());
}

TEST_CASE("fingerprint changes under reordering and edits") {
  std::vector<std::string> tokens{"<unk>", "<eos>"};
  for (int i = 0; i < 30; ++i) tokens.push_back("t" + std::to_string(i));
  const Vocabulary base(tokens);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto mutated = tokens;
    const std::size_t i = 2 + rng() % 30;
    std::size_t j = 2 + rng() % 30;
    if (j == i) j = i == 31 ? 2 : i + 1;
    if (trial % 2) {
      std::swap(mutated[i], mutated[j]);
    } else {
      mutated[i] += "x";
    }
    CHECK(Vocabulary(mutated).fingerprint() != base.fingerprint());
  }
  CHECK(Vocabulary(tokens).fingerprint() == base.fingerprint());
}

TEST_CASE("constructor validates reserved tokens and distinctness") {
  CHECK(kind_of([] { Vocabulary({"<eos>", "<unk>"}); }) == ErrorKind::data);
  CHECK(kind_of([] { Vocabulary({"<unk>", "<eos>", "a", "a"}); }) == ErrorKind::data);
  CHECK(kind_of([] { Vocabulary({"<unk>", "<eos>", ""}); }) == ErrorKind::data);
  CHECK(kind_of([] { Vocabulary({"<unk>", "<eos>", "a\nb"}); }) == ErrorKind::data);
  const Vocabulary v({"<unk>", "<eos>", "a"});
  CHECK(v.id_of("a") == 2);
  CHECK(v.id_of("nope") == kUnkId);
  CHECK(v.token(1) == "<eos>");
  CHECK(kind_of([&] { (void)v.token(3); }) == ErrorKind::out_of_range);
}

TEST_CASE("vocabulary files round trip") {
  TempDir dir("vocab");
  const std::vector<std::string> docs{"the woman worked as a nurse ."};
  const Vocabulary v = build_vocab(docs, 1);
  v.save(dir.file("v.txt"));
  const Vocabulary loaded = Vocabulary::load(dir.file("v.txt"));
  CHECK(loaded == v);
  CHECK(loaded.fingerprint() == v.fingerprint());
  CHECK(kind_of([&] { Vocabulary::load(dir.file("missing.txt")); }) == ErrorKind::io);
}

}  // TEST_SUITE
