#include "steered/decoder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "steered/error.hpp"

namespace steered {

namespace {

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TokenId argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

TokenId sample_from(const ProbVector& q, double top_p, SplitMix64& rng) {
  const auto kept = nucleus(q, top_p);
  double mass = 0.0;
  for (TokenId id : kept) mass += q[static_cast<std::size_t>(id)];
  const double u = rng.uniform() * mass;
  double cumulative = 0.0;
  for (TokenId id : kept) {
    cumulative += q[static_cast<std::size_t>(id)];
    if (u < cumulative) return id;
  }
  return kept.back();
}

}  // namespace

void SamplerConfig::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) fail(ErrorKind::usage, "top_p must lie in (0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorKind::usage, "temperature must be positive");
  }
  if (max_new_tokens < 1) fail(ErrorKind::usage, "max_new_tokens must be >= 1");
}

ProbVector apply_temperature(const ProbVector& dist, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorKind::usage, "temperature must be positive");
  }
  if (temperature == 1.0) return dist;
  std::vector<double> scaled(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    scaled[i] = dist[i] > 0.0 ? std::log(dist[i]) / temperature
                              : -std::numeric_limits<double>::infinity();
  }
  return softmax(scaled);
}

std::vector<TokenId> nucleus(const ProbVector& dist, double top_p) {
  if (!(top_p > 0.0 && top_p <= 1.0)) fail(ErrorKind::usage, "top_p must lie in (0, 1]");
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(), [&dist](TokenId a, TokenId b) {
    return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
  });
  std::vector<TokenId> kept;
  double cumulative = 0.0;
  for (TokenId id : order) {
    const double p = dist[static_cast<std::size_t>(id)];
    if (p <= 0.0) break;
    kept.push_back(id);
    cumulative += p;
    if (cumulative >= top_p) break;
  }
  if (kept.empty()) fail(ErrorKind::data, "degenerate distribution: no positive probability");
  return kept;
}

TokenId sample_next(const ProbVector& dist, const SamplerConfig& config, SplitMix64& rng) {
  config.validate();
  if (std::all_of(dist.values.begin(), dist.values.end(), [](double p) { return p == 0.0; })) {
    fail(ErrorKind::data, "degenerate all-zero distribution");
  }
  check_distribution(dist, "sampling distribution");
  if (config.greedy) return argmax(dist.values);
  return sample_from(apply_temperature(dist, config.temperature), config.top_p, rng);
}

TokenId sample_next(const LogitVector& logits, const SamplerConfig& config, SplitMix64& rng) {
  config.validate();
  check_finite(logits, "sampling logits");
  if (logits.size() == 0) fail(ErrorKind::data, "empty logits");
  if (config.greedy) return argmax(logits.values);
  std::vector<double> scaled(logits.values);
  if (config.temperature != 1.0) {
    for (double& v : scaled) v /= config.temperature;
  }
  return sample_from(softmax(scaled), config.top_p, rng);
}

Generation generate(const DistributionProvider& provider, std::span<const TokenId> prompt_ids,
                    const SamplerConfig& config) {
  config.validate();
  SplitMix64 rng(config.seed);
  std::vector<TokenId> context(prompt_ids.begin(), prompt_ids.end());
  Generation out;
  out.seed = config.seed;
  for (int step = 0; step < config.max_new_tokens; ++step) {
    TokenId next = 0;
    try {
      next = sample_next(provider.next_logits(context), config, rng);
    } catch (const Error& e) {
      fail(e.kind(), "generation step " + std::to_string(step) + ": " + e.what());
    }
    if (next == provider.eos_id()) break;
    context.push_back(next);
    out.token_ids.push_back(next);
  }
  out.continuation = provider.detokenize(out.token_ids);
  return out;
}

Generation generate(const DistributionProvider& provider, const std::string& prompt,
                    const SamplerConfig& config) {
  const auto ids = provider.tokenize(prompt);
  Generation out = generate(provider, std::span<const TokenId>(ids), config);
  out.prompt = prompt;
  return out;
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view prompt,
                          const std::optional<std::string>& group, std::size_t occurrence,
                          int repeat) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (unsigned char c : prompt) feed(c);
  feed(0x1f);
  if (group) {
    feed(1);
    for (unsigned char c : *group) feed(c);
  } else {
    feed(0);
  }
  h = mix64(h ^ mix64(static_cast<std::uint64_t>(occurrence) + 0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ static_cast<std::uint64_t>(repeat));
  return base_seed ^ h;
}

BatchResult generate_batch(const DistributionProvider& provider,
                           const std::vector<PromptItem>& prompts, int n_per_prompt,
                           const SamplerConfig& config, unsigned threads) {
  if (n_per_prompt < 1) fail(ErrorKind::usage, "n_per_prompt must be >= 1");
  config.validate();

  struct Job {
    std::size_t prompt_index;
    int repeat;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  std::map<std::pair<std::string, std::optional<std::string>>, std::size_t> seen;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    const std::size_t occurrence = seen[{prompts[p].text, prompts[p].group}]++;
    for (int r = 0; r < n_per_prompt; ++r) {
      jobs.push_back({p, r, derive_seed(config.seed, prompts[p].text, prompts[p].group, occurrence, r)});
    }
  }

  std::vector<std::optional<Generation>> results(jobs.size());
  std::vector<std::optional<std::pair<ErrorKind, std::string>>> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
      const Job& job = jobs[j];
      SamplerConfig item_config = config;
      item_config.seed = job.seed;
      try {
        Generation g = generate(provider, prompts[job.prompt_index].text, item_config);
        g.group = prompts[job.prompt_index].group;
        results[j] = std::move(g);
      } catch (const Error& e) {
        failures[j] = {e.kind(), e.what()};
      } catch (const std::exception& e) {
        failures[j] = {ErrorKind::internal, e.what()};
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BatchResult batch;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (results[j]) batch.generations.push_back(std::move(*results[j]));
    if (failures[j]) batch.errors.push_back({jobs[j].prompt_index, jobs[j].repeat, failures[j]->first, failures[j]->second});
  }
  return batch;
}

}  // namespace steered
