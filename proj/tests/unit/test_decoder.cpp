#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "steered/decoder.hpp"
#include "steered/error.hpp"
#include "steered/provider.hpp"
#include "support/test_util.hpp"

using namespace steered;
using steered::testing::make_vocab;
using steered::testing::numbered_vocab;
using steered::testing::random_distribution;

namespace {

/// Brute force: every subset prefix in sorted order until mass >= top_p.
std::set<TokenId> brute_nucleus(const std::vector<double>& p, double top_p) {
  std::vector<TokenId> order(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) order[i] = static_cast<TokenId>(i);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return p[a] > p[b]; });
  std::set<TokenId> out;
  double mass = 0;
  for (TokenId id : order) {
    if (p[id] <= 0) break;
    out.insert(id);
    mass += p[id];
    if (mass >= top_p) break;
  }
  return out;
}

/// Upper 0.999 quantile of chi-square, Wilson-Hilferty.
double chi2_critical(int dof) {
  const double z = 3.090232;
  const double k = dof;
  return k * std::pow(1 - 2 / (9 * k) + z * std::sqrt(2 / (9 * k)), 3);
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("nucleus of the worked example") {
  const ProbVector p{{0.5, 0.3, 0.2}};
  CHECK(nucleus(p, 0.7) == std::vector<TokenId>{0, 1});
  CHECK(nucleus(p, 0.5) == std::vector<TokenId>{0});
  CHECK(nucleus(p, 1.0) == std::vector<TokenId>{0, 1, 2});
  CHECK(nucleus(ProbVector{{0.25, 0.25, 0.5}}, 0.6) == std::vector<TokenId>{2, 0});
  CHECK(nucleus(ProbVector{{0.0, 1.0, 0.0}}, 1.0) == std::vector<TokenId>{1});
}

TEST_CASE("nucleus sampling frequencies") {
  const ProbVector p{{0.5, 0.3, 0.2}};
  SamplerConfig config;
  config.top_p = 0.7;
  SplitMix64 rng(12345);
  std::vector<int> counts(3, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_next(p, config, rng))];
  CHECK(counts[2] == 0);
  CHECK(std::abs(static_cast<double>(counts[0]) / draws - 0.625) <= 0.01);
  CHECK(std::abs(static_cast<double>(counts[1]) / draws - 0.375) <= 0.01);

  config.top_p = 1.0;
  std::fill(counts.begin(), counts.end(), 0);
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_next(p, config, rng))];
  CHECK(std::abs(static_cast<double>(counts[2]) / draws - 0.2) <= 0.01);
}

TEST_CASE("greedy takes the lowest-id argmax") {
  SamplerConfig config;
  config.greedy = true;
  SplitMix64 rng(1);
  for (int i = 0; i < 10; ++i) CHECK(sample_next(ProbVector{{0.2, 0.5, 0.3}}, config, rng) == 1);
  CHECK(sample_next(ProbVector{{0.4, 0.2, 0.4}}, config, rng) == 0);
  CHECK(sample_next(LogitVector{{1.0, 3.0, 3.0}}, config, rng) == 1);
}

TEST_CASE("sampled tokens stay inside the brute-force nucleus") {
  std::mt19937_64 gen(8);
  SplitMix64 rng(9);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + gen() % 12;
    auto p = random_distribution(gen, n);
    if (t % 4 == 0) p[gen() % n] = 0;
    if (t % 5 == 0) p[1] = p[0];
    double mass = 0;
    for (double v : p) mass += v;
    for (auto& v : p) v /= mass;
    SamplerConfig config;
    config.top_p = std::uniform_real_distribution<double>(0.05, 1.0)(gen);
    const auto allowed = brute_nucleus(p, config.top_p);
    const auto fast = nucleus(ProbVector{p}, config.top_p);
    CHECK(std::set<TokenId>(fast.begin(), fast.end()) == allowed);
    for (int d = 0; d < 50; ++d) CHECK(allowed.count(sample_next(ProbVector{p}, config, rng)) == 1);
  }
}

TEST_CASE("temperature sampling matches softmax(z / t) by chi-square") {
  std::mt19937_64 gen(10);
  SplitMix64 rng(11);
  for (double temperature : {0.5, 1.0, 2.0}) {
    const std::size_t n = 8;
    const auto z = steered::testing::random_logits(gen, n, 1.0);
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = z[i] / temperature;
    const auto expected = softmax(scaled);
    SamplerConfig config;
    config.top_p = 1.0;
    config.temperature = temperature;
    const int draws = 40000;
    std::vector<double> counts(n, 0);
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_next(LogitVector{z}, config, rng))];
    double chi2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = expected[i] * draws;
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    CHECK(chi2 < chi2_critical(static_cast<int>(n) - 1));

    const auto via_probs = apply_temperature(softmax(z), temperature);
    for (std::size_t i = 0; i < n; ++i) CHECK(via_probs[i] == doctest::Approx(expected[i]).epsilon(1e-9));
  }
}

TEST_CASE("sampler validation") {
  SamplerConfig config;
  CHECK_NOTHROW(config.validate());
  config.top_p = 0.0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  config.temperature = 0.0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  config.max_new_tokens = 0;
  CHECK_THROWS_AS(config.validate(), Error);
  SplitMix64 rng(0);
  CHECK_THROWS_AS(sample_next(ProbVector{{0.0, 0.0}}, SamplerConfig{}, rng), Error);
  CHECK(SamplerConfig{}.top_p == 0.9);
  CHECK(SamplerConfig{}.temperature == 1.0);
  CHECK(SamplerConfig{}.max_new_tokens == 15);
}

TEST_CASE("SplitMix64 reference values") {
  // First outputs for seed 0 and 1234567 from the published reference generator.
  SplitMix64 zero(0);
  CHECK(zero.next() == 0xe220a8397b1dcdafULL);
  CHECK(zero.next() == 0x6e789e6aa1b965f4ULL);
  SplitMix64 other(1234567);
  CHECK(other.next() == 6457827717110365317ULL);
  CHECK(other.next() == 3203168211198807973ULL);
  SplitMix64 u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
  }
}

TEST_CASE("generation stops at eos or the token budget") {
  auto vocab = make_vocab({"x", "y"});
  const TokenId x = 2;
  const auto always_x = table_provider(vocab, {}, ProbVector{{0, 0, 1, 0}});
  SamplerConfig config;
  config.max_new_tokens = 6;
  const auto g = generate(*always_x, "y", config);
  CHECK(g.continuation == "x x x x x x");
  CHECK(g.token_ids == std::vector<TokenId>(6, x));

  const auto always_eos = table_provider(vocab, {}, ProbVector{{0, 1, 0, 0}});
  const auto e = generate(*always_eos, "y", config);
  CHECK(e.continuation.empty());
  CHECK(e.token_ids.empty());
}

TEST_CASE("generation is deterministic for a seed") {
  auto vocab = numbered_vocab(10);
  std::mt19937_64 gen(12);
  std::map<std::vector<TokenId>, ProbVector> rows;
  for (TokenId a = 0; a < 10; ++a) rows[{a}] = ProbVector{random_distribution(gen, 10)};
  const auto provider = table_provider(vocab, rows, ProbVector{random_distribution(gen, 10)});
  SamplerConfig config;
  config.seed = 42;
  const auto a = generate(*provider, "w3 w4", config);
  const auto b = generate(*provider, "w3 w4", config);
  CHECK(a.continuation == b.continuation);
  CHECK(a.token_ids == b.token_ids);
  CHECK(a.token_ids.size() <= 15);
}

TEST_CASE("batch generation") {
  auto vocab = numbered_vocab(10);
  std::mt19937_64 gen(13);
  std::map<std::vector<TokenId>, ProbVector> rows;
  for (TokenId a = 0; a < 10; ++a) rows[{a}] = ProbVector{random_distribution(gen, 10)};
  const auto provider = table_provider(vocab, rows, ProbVector{random_distribution(gen, 10)});
  SamplerConfig config;
  config.seed = 99;
  config.max_new_tokens = 8;

  std::vector<PromptItem> prompts{{"w2", "g1"}, {"w3", "g2"}, {"w4 w5", "g1"}, {"w2", "g1"}};
  const auto batch = generate_batch(*provider, prompts, 5, config);
  CHECK(batch.generations.size() == 20);
  CHECK(batch.errors.empty());
  CHECK(batch.generations[0].group == std::optional<std::string>("g1"));

  const auto again = generate_batch(*provider, prompts, 5, config, 3);
  REQUIRE(again.generations.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(again.generations[i].token_ids == batch.generations[i].token_ids);
    CHECK(again.generations[i].seed == batch.generations[i].seed);
  }
  // Repeated identical prompts still get distinct streams.
  CHECK(batch.generations[0].seed != batch.generations[15].seed);

  auto pairs = [](const BatchResult& r) {
    std::multiset<std::pair<std::string, std::vector<TokenId>>> out;
    for (const auto& g : r.generations) out.emplace(g.prompt, g.token_ids);
    return out;
  };
  auto shuffled = prompts;
  std::mt19937_64 shuffle_rng(14);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(shuffled.begin(), shuffled.end(), shuffle_rng);
    CHECK(pairs(generate_batch(*provider, shuffled, 5, config)) == pairs(batch));
  }

  CHECK_THROWS_AS(generate_batch(*provider, prompts, 0, config), Error);
}

TEST_CASE("batch generation records per-item failures") {
  auto vocab = numbered_vocab(6);
  class Flaky final : public VocabProvider {
   public:
    using VocabProvider::VocabProvider;
    std::string name() const override { return "flaky"; }
    LogitVector next_logits(std::span<const TokenId> context) const override {
      if (!context.empty() && context.front() == 5) fail(ErrorKind::transport, "connection reset");
      return LogitVector{std::vector<double>(vocab_size(), 0.0)};
    }
  };
  const Flaky provider(vocab);
  SamplerConfig config;
  config.max_new_tokens = 3;
  const auto batch = generate_batch(provider, {{"w2", std::nullopt}, {"w5", std::nullopt}}, 2, config);
  CHECK(batch.errors.size() == 2);
  for (const auto& e : batch.errors) {
    CHECK(e.prompt_index == 1);
    CHECK(e.kind == ErrorKind::transport);
    CHECK(e.message.find("step 0") != std::string::npos);
  }
  for (const auto& g : batch.generations) CHECK(g.prompt == "w2");
}

}  // TEST_SUITE
