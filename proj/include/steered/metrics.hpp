#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "steered/datasets.hpp"
#include "steered/decoder.hpp"
#include "steered/provider.hpp"

namespace steered {

/// Reported bias values are multiplied by this factor.
inline constexpr double kReportScale = 100.0;

/// ‖sqrt(p) - sqrt(q)‖₂ / sqrt(2), capped at 1. Exactly 0 for p == q.
double hellinger(const ProbVector& p, const ProbVector& q);

/// Mean Hellinger distance between next-token distributions of each context
/// pair, times 100.
double local_bias(const DistributionProvider& provider,
                  const std::vector<std::pair<std::string, std::string>>& paired_contexts);

enum class Choice { stereo, anti, unrelated };

struct TripleScore {
  double stereo = 0;
  double anti = 0;
  double unrelated = 0;
  Choice chosen = Choice::unrelated;
};

struct StereoSetResult {
  double ss = 0;        // percent
  double lm_score = 0;  // percent
  std::size_t evaluated = 0;
  std::vector<std::pair<std::size_t, std::string>> excluded;  // (index, reason)
  std::vector<TripleScore> scores;                            // evaluated triples, in order
};

/// Mean per-token log-probability of `option` at the BLANK position given
/// the tokens to its left.
double option_score(const DistributionProvider& provider, const StereoTriple& triple,
                    std::string_view option);

/// Highest score wins; unrelated loses ties. Stereo-vs-anti ties count half.
Choice choose(const TripleScore& score) noexcept;

StereoSetResult stereoset_eval(const DistributionProvider& provider,
                               const std::vector<StereoTriple>& triples);

/// exp(-(1/L) sum_t ln p(x_t | x_<t)), teacher-forced from an empty context.
double perplexity(const DistributionProvider& provider, std::span<const TokenId> text);

/// Token-weighted perplexity over independent sentences.
double corpus_perplexity(const DistributionProvider& provider,
                         const std::vector<std::vector<TokenId>>& sentences);

/// Deterministic sentence property in [0, 1] (regard, toxicity, ...).
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual std::string name() const = 0;
  virtual double score(std::string_view text) const = 0;
};

/// Mean weight of lexicon terms present in the text, 0 if none match.
class LexiconScorer final : public SentenceScorer {
 public:
  explicit LexiconScorer(std::unordered_map<std::string, double> weights,
                         std::string name = "lexicon");

  /// `term TAB weight` per line; `#` starts a comment.
  static LexiconScorer load(const std::filesystem::path& path);

  std::string name() const override { return name_; }
  double score(std::string_view text) const override;

 private:
  std::unordered_map<std::string, double> weights_;
  std::string name_;
};

struct EvalReport {
  std::string metric;
  std::string direction;
  std::map<std::string, double> per_group;
  std::map<std::string, double> values;
  double aggregate = 0;
  std::size_t sample_count = 0;
  std::size_t excluded = 0;
  /// Echo of the configuration that produced the report, as JSON text.
  std::string config_json = "{}";
};

/// Per-group mean score times 100; aggregate is the largest pairwise gap.
/// Scores the continuation of each generation.
EvalReport group_discrepancy(const SentenceScorer& scorer,
                             const std::vector<Generation>& generations);

/// max_{a,b} |v_a - v_b|.
double max_pairwise_gap(const std::map<std::string, double>& values);

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

}  // namespace steered
