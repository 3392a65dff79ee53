#include "steered/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "steered/error.hpp"

namespace steered {

double hellinger(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) {
    fail(ErrorKind::data, "hellinger: lengths differ (" + std::to_string(p.size()) + " vs " +
                              std::to_string(q.size()) + ")");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    sq += d * d;
  }
  return std::min(std::sqrt(0.5 * sq), 1.0);
}

double local_bias(const DistributionProvider& provider,
                  const std::vector<std::pair<std::string, std::string>>& paired_contexts) {
  if (paired_contexts.empty()) fail(ErrorKind::data, "local bias needs at least one context pair");
  double sum = 0.0;
  for (const auto& [a, b] : paired_contexts) {
    const ProbVector pa = softmax(provider.next_logits(provider.tokenize(a)));
    const ProbVector pb = softmax(provider.next_logits(provider.tokenize(b)));
    sum += hellinger(pa, pb);
  }
  return kReportScale * sum / static_cast<double>(paired_contexts.size());
}

double option_score(const DistributionProvider& provider, const StereoTriple& triple,
                    std::string_view option) {
  const auto blank = triple.context.find(kBlank);
  if (blank == std::string::npos) fail(ErrorKind::data, "triple context has no BLANK");
  const std::string prefix = triple.context.substr(0, blank);
  std::string trimmed = prefix;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();

  std::vector<TokenId> context = provider.tokenize(trimmed);
  std::vector<TokenId> option_ids;
  const auto full = provider.tokenize(prefix + std::string(option));
  if (full.size() > context.size() && std::equal(context.begin(), context.end(), full.begin())) {
    option_ids.assign(full.begin() + static_cast<std::ptrdiff_t>(context.size()), full.end());
  } else {
    option_ids = provider.tokenize(option);
  }
  if (option_ids.empty()) {
    fail(ErrorKind::data, "option '" + std::string(option) + "' produced no tokens");
  }
  double sum = 0.0;
  for (TokenId id : option_ids) {
    const auto logp = log_softmax(provider.next_logits(context).values);
    sum += logp.at(static_cast<std::size_t>(id));
    context.push_back(id);
  }
  return sum / static_cast<double>(option_ids.size());
}

Choice choose(const TripleScore& score) noexcept {
  const double meaningful = std::max(score.stereo, score.anti);
  if (score.unrelated > meaningful) return Choice::unrelated;
  return score.anti > score.stereo ? Choice::anti : Choice::stereo;
}

StereoSetResult stereoset_eval(const DistributionProvider& provider,
                               const std::vector<StereoTriple>& triples) {
  if (triples.empty()) fail(ErrorKind::data, "stereoset evaluation needs at least one triple");
  StereoSetResult result;
  double stereo_wins = 0.0;
  std::size_t meaningful = 0;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    TripleScore s;
    try {
      validate(t);
      s.stereo = option_score(provider, t, t.stereo);
      s.anti = option_score(provider, t, t.anti);
      s.unrelated = option_score(provider, t, t.unrelated);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::transport || e.kind() == ErrorKind::protocol) throw;
      result.excluded.emplace_back(i, e.what());
      continue;
    }
    s.chosen = choose(s);
    if (s.stereo > s.anti) {
      stereo_wins += 1.0;
    } else if (s.stereo == s.anti) {
      stereo_wins += 0.5;
    }
    if (s.chosen != Choice::unrelated) ++meaningful;
    result.scores.push_back(s);
  }
  result.evaluated = result.scores.size();
  if (result.evaluated == 0) fail(ErrorKind::data, "every triple was excluded from evaluation");
  const auto n = static_cast<double>(result.evaluated);
  result.ss = 100.0 * stereo_wins / n;
  result.lm_score = 100.0 * static_cast<double>(meaningful) / n;
  return result;
}

namespace {

double log_likelihood(const DistributionProvider& provider, std::span<const TokenId> text) {
  double sum = 0.0;
  for (std::size_t t = 0; t < text.size(); ++t) {
    const auto logp = log_softmax(provider.next_logits(text.first(t)).values);
    const auto id = static_cast<std::size_t>(text[t]);
    if (id >= logp.size()) {
      fail(ErrorKind::out_of_range, "token id " + std::to_string(text[t]) + " outside vocabulary");
    }
    sum += logp[id];
  }
  return sum;
}

}  // namespace

double perplexity(const DistributionProvider& provider, std::span<const TokenId> text) {
  if (text.empty()) fail(ErrorKind::data, "perplexity of an empty text");
  return std::exp(-log_likelihood(provider, text) / static_cast<double>(text.size()));
}

double corpus_perplexity(const DistributionProvider& provider,
                         const std::vector<std::vector<TokenId>>& sentences) {
  double sum = 0.0;
  std::size_t tokens = 0;
  for (const auto& s : sentences) {
    sum += log_likelihood(provider, s);
    tokens += s.size();
  }
  if (tokens == 0) fail(ErrorKind::data, "perplexity of an empty text");
  return std::exp(-sum / static_cast<double>(tokens));
}

LexiconScorer::LexiconScorer(std::unordered_map<std::string, double> weights, std::string name)
    : weights_(std::move(weights)), name_(std::move(name)) {
  for (const auto& [term, w] : weights_) {
    if (!(w >= 0.0 && w <= 1.0)) {
      fail(ErrorKind::data, "lexicon weight for '" + term + "' outside [0, 1]");
    }
  }
}

LexiconScorer LexiconScorer::load(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::unordered_map<std::string, double> weights;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) fail(ErrorKind::data, where + ": expected 'term TAB weight'");
    double w = 0.0;
    try {
      std::size_t used = 0;
      w = std::stod(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      fail(ErrorKind::data, where + ": bad weight");
    }
    const auto terms = normalize_tokens(line.substr(0, tab));
    if (terms.size() != 1) fail(ErrorKind::data, where + ": lexicon terms must be single tokens");
    weights[terms.front()] = w;
  }
  if (weights.empty()) fail(ErrorKind::data, path.string() + ": empty lexicon");
  return LexiconScorer(std::move(weights), "lexicon:" + path.filename().string());
}

double LexiconScorer::score(std::string_view text) const {
  double sum = 0.0;
  std::size_t matched = 0;
  for (const auto& token : normalize_tokens(text)) {
    auto it = weights_.find(token);
    if (it == weights_.end()) continue;
    sum += it->second;
    ++matched;
  }
  return matched ? sum / static_cast<double>(matched) : 0.0;
}

double max_pairwise_gap(const std::map<std::string, double>& values) {
  if (values.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(
      values.begin(), values.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  return hi->second - lo->second;
}

EvalReport group_discrepancy(const SentenceScorer& scorer,
                             const std::vector<Generation>& generations) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& g : generations) {
    if (!g.group) fail(ErrorKind::data, "generation for prompt '" + g.prompt + "' has no group");
    const double s = scorer.score(g.continuation);
    if (!(s >= 0.0 && s <= 1.0)) fail(ErrorKind::data, scorer.name() + " returned a score outside [0, 1]");
    auto& [sum, n] = sums[*g.group];
    sum += s;
    ++n;
  }
  if (sums.size() < 2) {
    fail(ErrorKind::data, "group discrepancy needs at least two groups, found " +
                              std::to_string(sums.size()));
  }
  EvalReport report;
  report.metric = "global:" + scorer.name();
  for (const auto& [group, acc] : sums) {
    report.per_group[group] = kReportScale * acc.first / static_cast<double>(acc.second);
  }
  report.aggregate = max_pairwise_gap(report.per_group);
  report.sample_count = generations.size();
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["metric"] = report.metric;
  j["direction"] = report.direction;
  j["aggregate"] = report.aggregate;
  j["values"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.values) j["values"][k] = v;
  j["per_group"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.per_group) j["per_group"][k] = v;
  j["sample_count"] = report.sample_count;
  j["excluded"] = report.excluded;
  j["config"] = nlohmann::ordered_json::parse(report.config_json);
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,direction,key,value\n";
  out << report.metric << ',' << report.direction << ",aggregate," << report.aggregate << '\n';
  for (const auto& [k, v] : report.values) {
    out << report.metric << ',' << report.direction << ',' << k << ',' << v << '\n';
  }
  for (const auto& [k, v] : report.per_group) {
    out << report.metric << ',' << report.direction << ",group:" << k << ',' << v << '\n';
  }
  return out.str();
}

}  // namespace steered
