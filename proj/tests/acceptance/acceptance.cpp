// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "steered/datasets.hpp"
#include "steered/decoder.hpp"
#include "steered/ensemble.hpp"
#include "steered/error.hpp"
#include "steered/metrics.hpp"
#include "steered/ngram.hpp"
#include "steered/pipeline.hpp"
#include "steered/provider.hpp"
#include "steered/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace steered;

namespace {

constexpr double kEquivalenceTol = 1e-9;
constexpr double kHellingerHandTol = 1e-5;
constexpr double kMetricSlack = 1e-12;
constexpr double kPerplexityRelTol = 1e-9;
constexpr double kFrequencyTol = 0.01;
constexpr double kLmScoreSlack = 10.0;
constexpr double kNgramTol = 1e-12;

constexpr double kEquivalenceBudget = 1.0;
constexpr double kNucleusBudget = 5.0;
constexpr double kDeskBudget = 10.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome verdict(bool pass, std::string detail) { return {pass, std::move(detail)}; }

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

class Scratch {
 public:
  Scratch() {
    path_ = fs::temp_directory_path() / ("steered-acceptance-" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::shared_ptr<const Vocabulary> numbered_vocab(std::size_t n) {
  std::vector<std::string> tokens{std::string(kUnkToken), std::string(kEosToken)};
  for (std::size_t i = 2; i < n; ++i) tokens.push_back("w" + std::to_string(i));
  return std::make_shared<const Vocabulary>(std::move(tokens));
}

/// Same logits for every context.
class FixedProvider final : public VocabProvider {
 public:
  FixedProvider(std::shared_ptr<const Vocabulary> vocab, std::vector<double> z)
      : VocabProvider(std::move(vocab)), z_(std::move(z)) {}
  std::string name() const override { return "fixed"; }
  LogitVector next_logits(std::span<const TokenId>) const override { return LogitVector{z_}; }

 private:
  std::vector<double> z_;
};

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
  std::gamma_distribution<double> gamma(0.5, 1.0);
  std::vector<double> p(n);
  double sum = 0;
  for (auto& x : p) sum += x = gamma(rng) + 1e-300;
  for (auto& x : p) x /= sum;
  return p;
}

/// softmax(z + a (zp - zm)) evaluated in long double.
std::vector<double> steered_oracle(const std::vector<double>& z, const std::vector<double>& zp,
                                   const std::vector<double>& zm, double alpha) {
  std::vector<long double> t(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    t[i] = static_cast<long double>(z[i]) + alpha * (static_cast<long double>(zp[i]) - zm[i]);
  }
  const long double top = *std::max_element(t.begin(), t.end());
  long double sum = 0;
  for (auto& x : t) sum += x = std::exp(x - top);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<double>(t[i] / sum);
  return out;
}

Outcome logit_product_equivalence() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> alpha_dist(0.0, 5.0);
  double worst = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t n = 2 + rng() % 63;
    const double alpha = alpha_dist(rng);
    const auto z = normal_vector(rng, n, 3.0);
    const auto zp = normal_vector(rng, n, 3.0);
    const auto zm = normal_vector(rng, n, 3.0);
    const auto logit_form = combine_logits(LogitVector{z}, LogitVector{zp}, LogitVector{zm}, alpha);
    const auto product_form = combine_product_form(softmax(z), softmax(zp), softmax(zm), alpha);
    const auto oracle = steered_oracle(z, zp, zm, alpha);
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max({worst, std::abs(logit_form[i] - product_form[i]), std::abs(logit_form[i] - oracle[i]),
                        std::abs(product_form[i] - oracle[i])});
    }
  }
  return verdict(worst <= kEquivalenceTol, fmt("max |diff| %.3g over 1000 draws", worst));
}

Outcome identity_cases() {
  std::mt19937_64 rng(202);
  std::size_t checked = 0, mismatched = 0;
  for (int draw = 0; draw < 200; ++draw) {
    const std::size_t n = 2 + rng() % 63;
    auto vocab = numbered_vocab(n);
    const auto z = normal_vector(rng, n, 3.0);
    const auto zp = normal_vector(rng, n, 3.0);
    const auto zm = normal_vector(rng, n, 3.0);
    const auto reference = softmax(z).values;
    const double alpha = 0.25 + 4.75 * static_cast<double>(rng() % 1000) / 1000.0;

    ProviderPtr base = std::make_shared<FixedProvider>(vocab, z);
    ProviderPtr expert = std::make_shared<FixedProvider>(vocab, zp);
    ProviderPtr anti = std::make_shared<FixedProvider>(vocab, zm);
    ProviderPtr twin = std::make_shared<FixedProvider>(vocab, zp);
    const std::vector<TokenId> ctx{1};

    std::vector<std::vector<double>> outcomes;
    outcomes.push_back(combine_logits(LogitVector{z}, LogitVector{zp}, LogitVector{zm}, 0.0).values);
    outcomes.push_back(combine_logits(LogitVector{z}, LogitVector{zp}, LogitVector{zp}, alpha).values);
    for (auto mode : {DebiasMode::full, DebiasMode::expert_only, DebiasMode::anti_only}) {
      auto at_zero = debiased_provider(base, {SignalSpec{expert, anti, 1.0}}, {0.0, mode});
      outcomes.push_back(softmax(at_zero->next_logits(ctx)).values);
    }
    auto same = debiased_provider(base, {SignalSpec{expert, expert, 1.0}}, {alpha, DebiasMode::full});
    outcomes.push_back(softmax(same->next_logits(ctx)).values);
    auto twins = debiased_provider(base, {SignalSpec{expert, twin, 1.0}}, {alpha, DebiasMode::full});
    outcomes.push_back(softmax(twins->next_logits(ctx)).values);
    for (const auto& p : outcomes) {
      ++checked;
      mismatched += p != reference;
    }
  }
  return verdict(mismatched == 0,
                 std::to_string(mismatched) + " of " + std::to_string(checked) + " cases differ from the base bits");
}

Outcome hellinger_oracle() {
  const double same = hellinger(ProbVector{{0.2, 0.3, 0.5}}, ProbVector{{0.2, 0.3, 0.5}});
  const double disjoint = hellinger(ProbVector{{1, 0}}, ProbVector{{0, 1}});
  const double half = hellinger(ProbVector{{0.5, 0.5}}, ProbVector{{0.9, 0.1}});
  bool pass = std::abs(same) <= kHellingerHandTol && std::abs(disjoint - 1.0) <= kHellingerHandTol &&
              std::abs(half - 0.32492) <= kHellingerHandTol;

  std::mt19937_64 rng(303);
  std::size_t violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng() % 31;
    const ProbVector p{random_distribution(rng, n)}, q{random_distribution(rng, n)}, r{random_distribution(rng, n)};
    const double pq = hellinger(p, q), qp = hellinger(q, p), qr = hellinger(q, r), pr = hellinger(p, r);
    violations += pq != qp;
    violations += pr > pq + qr + kMetricSlack;
    violations += pq < 0 || pq > 1 + kMetricSlack;
    violations += hellinger(p, p) > kMetricSlack;
  }
  pass = pass && violations == 0;
  return verdict(pass, fmt("hand cases %.6f %.6f %.6f; ", same, disjoint, half) + std::to_string(violations) +
                           " property violations on 1000 triples");
}

Outcome perplexity_analytic() {
  auto vocab = numbered_vocab(4);
  auto uniform = uniform_provider(vocab);
  const std::vector<TokenId> text{2, 3, 2, 1, 3, 3, 2};
  const double ppl_uniform = perplexity(*uniform, text);

  std::map<std::vector<TokenId>, ProbVector> rows;
  for (std::size_t t = 0; t < text.size(); ++t) {
    std::vector<double> onehot(vocab->size(), 0.0);
    onehot[static_cast<std::size_t>(text[t])] = 1.0;
    rows.emplace(std::vector<TokenId>(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(t)),
                 ProbVector{onehot});
  }
  auto oracle = table_provider(vocab, std::move(rows), ProbVector{{0.25, 0.25, 0.25, 0.25}});
  const double ppl_oracle = perplexity(*oracle, text);
  const bool pass = std::abs(ppl_uniform - 4.0) <= kPerplexityRelTol * 4.0 &&
                    std::abs(ppl_oracle - 1.0) <= kPerplexityRelTol;
  return verdict(pass, fmt("uniform %.12g, oracle %.12g", ppl_uniform, ppl_oracle));
}

/// Smallest prefix of the descending order, ties by id, reaching top_p.
std::vector<bool> brute_nucleus(const std::vector<double>& p, double top_p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] > p[b]; });
  std::vector<bool> in(p.size(), false);
  double mass = 0;
  for (auto i : order) {
    in[i] = true;
    mass += p[i];
    if (mass >= top_p) break;
  }
  return in;
}

Outcome nucleus_statistics() {
  const std::vector<double> p{0.5, 0.3, 0.2};
  SamplerConfig config;
  config.top_p = 0.7;
  config.temperature = 1.0;
  SplitMix64 rng(0);
  const auto allowed = brute_nucleus(p, config.top_p);
  std::vector<std::size_t> hits(p.size(), 0);
  std::size_t outside = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto id = static_cast<std::size_t>(sample_next(ProbVector{p}, config, rng));
    ++hits[id];
    outside += !allowed[id];
  }
  const double f0 = static_cast<double>(hits[0]) / draws, f1 = static_cast<double>(hits[1]) / draws;

  std::mt19937_64 gen(404);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto q = random_distribution(gen, 2 + gen() % 30);
    SamplerConfig c;
    c.top_p = 0.05 + 0.95 * static_cast<double>(gen() % 1000) / 1000.0;
    const auto in = brute_nucleus(q, c.top_p);
    outside += !in[static_cast<std::size_t>(sample_next(ProbVector{q}, c, rng))];
  }
  const bool pass = std::abs(f0 - 0.625) <= kFrequencyTol && std::abs(f1 - 0.375) <= kFrequencyTol &&
                    hits[2] == 0 && outside == 0;
  return verdict(pass, fmt("frequencies [%.4f, %.4f, %.4f]; ", f0, f1, static_cast<double>(hits[2]) / draws) +
                           std::to_string(outside) + " draws outside the nucleus");
}

std::string letters(std::size_t i) {
  std::string s;
  for (int k = 0; k < 3; ++k, i /= 26) s.push_back(static_cast<char>('a' + i % 26));
  return s;
}

std::vector<TokenSeq> tokenize_all(const Vocabulary& vocab, const std::vector<std::string>& sentences) {
  std::vector<TokenSeq> out;
  for (const auto& s : sentences) out.push_back(tokenize(vocab, s));
  return out;
}

std::vector<std::vector<TokenId>> ids_of(const std::vector<TokenSeq>& seqs) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& s : seqs) out.push_back(s.ids);
  return out;
}

/// Synthetic pairs (T1, T2, A1, A2) with a per-pair stereotype strength: the
/// base corpus repeats the stereotype sentences `strength` times and the
/// anti-stereotype sentences once. Experts are the base corpus plus one pass
/// over the anti-stereotype (expert) or stereotype (anti-expert) sentences.
struct DeskSetup {
  std::vector<BiasPair> pairs;
  std::vector<int> strength;
  std::vector<std::string> base, expert, anti;
  std::vector<StereoTriple> triples;
};

DeskSetup desk_setup(std::size_t n_pairs, const std::string& direction, std::size_t offset) {
  DeskSetup d;
  const std::vector<std::string> neutral{"the table is made of wood", "bread is on the table",
                                         "a lamp stands by the window", "the river runs past the hill"};
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t k = offset + i;
    d.pairs.push_back({"t" + letters(2 * k), "t" + letters(2 * k + 1), "a" + letters(2 * k), "a" + letters(2 * k + 1),
                       direction});
    d.strength.push_back(2 + static_cast<int>(i % 8));
  }
  const std::vector<std::string> templates{"{T} are {A}", "all {T} are {A} ."};
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto [stereo, anti] = expand_pairs({d.pairs[i]}, templates);
    for (int r = 0; r < d.strength[i]; ++r) d.base.insert(d.base.end(), stereo.sentences.begin(), stereo.sentences.end());
    d.base.insert(d.base.end(), anti.sentences.begin(), anti.sentences.end());
    d.expert.insert(d.expert.end(), anti.sentences.begin(), anti.sentences.end());
    d.anti.insert(d.anti.end(), stereo.sentences.begin(), stereo.sentences.end());
    const auto& p = d.pairs[i];
    d.triples.push_back({p.t1 + " are BLANK", p.a1, p.a2, "wood", direction});
    d.triples.push_back({p.t2 + " are BLANK", p.a2, p.a1, "bread", direction});
  }
  d.base.insert(d.base.end(), neutral.begin(), neutral.end());
  d.expert.insert(d.expert.begin(), d.base.begin(), d.base.end());
  d.anti.insert(d.anti.begin(), d.base.begin(), d.base.end());
  return d;
}

Outcome desk_debiasing() {
  const auto d = desk_setup(24, "synthetic", 0);
  std::vector<std::string> all = d.base;
  auto vocab = std::make_shared<const Vocabulary>(build_vocab(all, 1));
  auto train = [&](const std::vector<std::string>& text) -> ProviderPtr {
    const auto ids = ids_of(tokenize_all(*vocab, text));
    return std::make_shared<NGramModel>(train_ngram(ids, 3, 0.01, vocab));
  };
  ProviderPtr base = train(d.base);
  ProviderPtr expert = train(d.expert);
  ProviderPtr anti = train(d.anti);
  auto at = [&](double alpha) {
    auto model = debiased_provider(base, {SignalSpec{expert, anti, 1.0}}, {alpha, DebiasMode::full});
    return stereoset_eval(*model, d.triples);
  };
  const auto r0 = at(0.0), r2 = at(2.0);
  const bool pass = r0.evaluated == d.triples.size() && r2.evaluated == d.triples.size() &&
                    std::abs(r2.ss - 50.0) < std::abs(r0.ss - 50.0) && r2.lm_score >= r0.lm_score - kLmScoreSlack;
  return verdict(pass, std::to_string(d.pairs.size()) + " pairs: " +
                           fmt("SS %.2f -> %.2f, LM %.2f -> %.2f", r0.ss, r2.ss, r0.lm_score, r2.lm_score));
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_file(path, text);
}

Outcome inspect_direction() {
  Scratch dir;
  std::vector<std::string> base, stereo{"the woman worked as a nurse .", "the man worked as a doctor ."},
      anti{"the woman worked as a doctor .", "the man worked as a nurse ."};
  for (int r = 0; r < 3; ++r) base.insert(base.end(), stereo.begin(), stereo.end());
  base.insert(base.end(), anti.begin(), anti.end());
  base.push_back("the woman walked to the market .");
  write_lines(dir.file("base.txt"), base);
  write_lines(dir.file("stereo.txt"), stereo);
  write_lines(dir.file("anti.txt"), anti);
  pipeline::run_build_vocab({{"inputs", {dir.file("base.txt")}}, {"out", dir.file("vocab.txt")}});
  for (const char* name : {"base", "stereo", "anti"}) {
    pipeline::run_train({{"corpus", dir.file(std::string(name) + ".txt")},
                         {"vocab", dir.file("vocab.txt")},
                         {"order", 6},
                         {"out", dir.file(std::string(name) + ".ngram")}});
  }
  const json config{{"vocab", dir.file("vocab.txt")},
                    {"base", dir.file("base.ngram")},
                    {"ensemble",
                     {{"alpha", 2.0},
                      {"mode", "full"},
                      {"signals", {{{"expert", dir.file("anti.ngram")}, {"anti_expert", dir.file("stereo.ngram")}}}}}}};
  const json report = pipeline::run_inspect(
      {{"config", config}, {"prompt", "the woman worked as a"}, {"candidates", {"doctor", "nurse"}}});
  double doctor = 0, nurse = 0;
  for (const auto& row : report["rows"]) {
    (row["token"] == "doctor" ? doctor : nurse) = row["shift"].get<double>();
  }
  return verdict(doctor > 0 && nurse < 0, fmt("shift doctor %+.4f, nurse %+.4f", doctor, nurse));
}

Outcome matrix_plumbing() {
  Scratch dir;
  const std::vector<std::string> directions{"alpha", "beta", "gamma"};
  std::vector<std::string> base_all;
  std::vector<DeskSetup> setups;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    setups.push_back(desk_setup(8, directions[i], 100 * (i + 1)));
    base_all.insert(base_all.end(), setups.back().base.begin(), setups.back().base.end());
  }
  write_lines(dir.file("base.txt"), base_all);
  pipeline::run_build_vocab({{"inputs", {dir.file("base.txt")}}, {"out", dir.file("vocab.txt")}});
  auto train = [&](const std::string& name, std::vector<std::string> text) {
    write_lines(dir.file(name + ".txt"), text);
    pipeline::run_train({{"corpus", dir.file(name + ".txt")},
                         {"vocab", dir.file("vocab.txt")},
                         {"order", 3},
                         {"out", dir.file(name + ".ngram")}});
  };
  train("base", base_all);
  json evaluations = json::array();
  for (std::size_t i = 0; i < directions.size(); ++i) {
    auto expert = base_all, anti = base_all;
    const auto& d = setups[i];
    expert.insert(expert.end(), d.expert.begin() + static_cast<std::ptrdiff_t>(d.base.size()), d.expert.end());
    anti.insert(anti.end(), d.anti.begin() + static_cast<std::ptrdiff_t>(d.base.size()), d.anti.end());
    train(directions[i] + ".expert", expert);
    train(directions[i] + ".anti", anti);
    write_text_file(dir.file(directions[i] + ".jsonl"), format_stereoset(d.triples));
    evaluations.push_back({{"direction", directions[i]}, {"data", dir.file(directions[i] + ".jsonl")}});
  }
  auto ensemble = [&](const std::string& d) {
    return json{{"alpha", 2.0},
                {"mode", "full"},
                {"signals", {{{"expert", dir.file(d + ".expert.ngram")}, {"anti_expert", dir.file(d + ".anti.ngram")}}}}};
  };
  const json config{{"vocab", dir.file("vocab.txt")}, {"base", dir.file("base.ngram")}};
  const json grid = pipeline::run_eval_matrix(
      {{"config", config},
       {"mitigations",
        {{{"name", "none"}, {"ensemble", {{"mode", "none"}}}},
         {{"name", "alpha"}, {"ensemble", ensemble("alpha")}},
         {{"name", "beta"}, {"ensemble", ensemble("beta")}}}},
       {"evaluations", evaluations},
       {"out_prefix", dir.file("matrix")}});
  bool pass = grid["ss"].size() == 3 && fs::exists(dir.file("matrix.csv"));
  std::string detail = "none row";
  for (std::size_t j = 0; j < directions.size() && pass; ++j) {
    const json single = pipeline::run_eval(
        {{"config", config}, {"which", "stereoset"}, {"data", dir.file(directions[j] + ".jsonl")}});
    const double baseline = single["aggregate"].get<double>();
    const double cell = grid["ss"][0][j].get<double>();
    pass = pass && grid["ss"][j].size() == 3 && cell == baseline;
    detail += fmt(" %.4f/%.4f", cell, baseline);
  }
  return verdict(pass, detail + " (matrix/eval)");
}

Outcome ngram_recount() {
  std::mt19937_64 rng(909);
  double worst = 0;
  std::size_t queries = 0;
  for (int corpus_id = 0; corpus_id < 8; ++corpus_id) {
    const std::size_t n = 4 + rng() % 8;
    auto vocab = numbered_vocab(n);
    std::vector<std::vector<TokenId>> corpus;
    for (std::size_t tokens = 0; tokens < 200;) {
      std::vector<TokenId> s(std::min<std::size_t>(1 + rng() % 15, 200 - tokens));
      for (auto& id : s) id = static_cast<TokenId>(2 + rng() % (n - 2));
      tokens += s.size();
      corpus.push_back(std::move(s));
    }
    for (int order = 1; order <= 4; ++order) {
      const double k = corpus_id % 2 ? 0.01 : 0.5;
      const auto model = train_ngram(corpus, order, k, vocab);
      const std::size_t h = static_cast<std::size_t>(order - 1);
      for (int q = 0; q < 100; ++q) {
        std::vector<TokenId> ctx(rng() % 6);
        for (auto& id : ctx) id = static_cast<TokenId>(rng() % n);
        std::vector<TokenId> query(h, kEosId);
        query.insert(query.end(), ctx.begin(), ctx.end());
        std::vector<double> oracle(n, 1.0 / static_cast<double>(n));
        for (std::size_t len = h + 1; len-- > (order == 1 ? 0u : 1u);) {
          std::vector<double> counts(n, 0.0);
          double total = 0;
          for (const auto& seq : corpus) {
            std::vector<TokenId> s(h, kEosId);
            s.insert(s.end(), seq.begin(), seq.end());
            s.push_back(kEosId);
            for (std::size_t i = h; i < s.size(); ++i) {
              if (std::equal(s.begin() + static_cast<std::ptrdiff_t>(i - len), s.begin() + static_cast<std::ptrdiff_t>(i),
                             query.end() - static_cast<std::ptrdiff_t>(len))) {
                counts[static_cast<std::size_t>(s[i])] += 1;
                total += 1;
              }
            }
          }
          if (total == 0) continue;
          for (std::size_t i = 0; i < n; ++i) oracle[i] = (counts[i] + k) / (total + k * static_cast<double>(n));
          break;
        }
        const auto p = softmax(model.next_logits(ctx));
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(p[i] - oracle[i]));
        ++queries;
      }
    }
  }
  return verdict(worst <= kNgramTol,
                 fmt("max |diff| %.3g over %g queries", worst, static_cast<double>(queries)));
}

struct Criterion {
  const char* name;
  double budget_s;  // 0 means no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"logit-form and product-form ensembles agree", kEquivalenceBudget, logit_product_equivalence},
      {"alpha=0 and expert=anti-expert return the base distribution", 0, identity_cases},
      {"hellinger hand cases and metric properties", 0, hellinger_oracle},
      {"perplexity of uniform and oracle providers", 0, perplexity_analytic},
      {"nucleus sampler frequencies and support", kNucleusBudget, nucleus_statistics},
      {"desk-scale debiasing moves SS toward 50", kDeskBudget, desk_debiasing},
      {"inspect shifts doctor up and nurse down", 0, inspect_direction},
      {"3x3 eval-matrix baseline row matches eval", 0, matrix_plumbing},
      {"n-gram matches brute-force recount", 0, ngram_recount},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && elapsed >= c.budget_s) {
      outcome.pass = false;
      outcome.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    failures += !outcome.pass;
    std::printf("%s  %-58s %s [%.3f s]\n", outcome.pass ? "PASS" : "FAIL", c.name, outcome.detail.c_str(), elapsed);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
