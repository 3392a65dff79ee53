#include "steered/ensemble.hpp"

#include <cmath>
#include <future>

#include "steered/error.hpp"

namespace steered {

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) {
    fail(ErrorKind::data, "vector lengths differ: " + std::to_string(a) + ", " +
                              std::to_string(b) + ", " + std::to_string(c));
  }
  if (a == 0) fail(ErrorKind::data, "empty vectors");
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    fail(ErrorKind::usage, "alpha must be a finite nonnegative number");
  }
}

std::size_t rank_of(const ProbVector& p, std::size_t i) {
  std::size_t rank = 1;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] > p[i] || (p[j] == p[i] && j < i)) ++rank;
  }
  return rank;
}

}  // namespace

std::string_view to_string(DebiasMode mode) noexcept {
  switch (mode) {
    case DebiasMode::none: return "none";
    case DebiasMode::full: return "full";
    case DebiasMode::expert_only: return "expert_only";
    case DebiasMode::anti_only: return "anti_only";
  }
  return "none";
}

DebiasMode parse_debias_mode(std::string_view text) {
  if (text == "none") return DebiasMode::none;
  if (text == "full") return DebiasMode::full;
  if (text == "expert_only") return DebiasMode::expert_only;
  if (text == "anti_only") return DebiasMode::anti_only;
  fail(ErrorKind::usage, "unknown debiasing mode '" + std::string(text) +
                             "' (expected none, full, expert_only or anti_only)");
}

ProbVector combine_logits(const LogitVector& z, const LogitVector& z_plus,
                          const LogitVector& z_minus, double alpha) {
  check_lengths(z.size(), z_plus.size(), z_minus.size());
  check_alpha(alpha);
  check_finite(z, "target logits");
  check_finite(z_plus, "expert logits");
  check_finite(z_minus, "anti-expert logits");
  std::vector<double> steered(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    steered[i] = z[i] + alpha * (z_plus[i] - z_minus[i]);
  }
  return softmax(steered);
}

ProbVector combine_product_form(const ProbVector& p, const ProbVector& p_plus,
                                const ProbVector& p_minus, double alpha) {
  check_lengths(p.size(), p_plus.size(), p_minus.size());
  check_alpha(alpha);
  ProbVector out;
  out.values.resize(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double base = std::max(p[i], kProbFloor);
    const double ratio = std::max(p_plus[i], kProbFloor) / std::max(p_minus[i], kProbFloor);
    out.values[i] = base * std::pow(ratio, alpha);
    sum += out.values[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) fail(ErrorKind::data, "product form cannot be normalized");
  for (double& v : out.values) v /= sum;
  return out;
}

DebiasedProvider::DebiasedProvider(ProviderPtr base, std::vector<SignalSpec> signals,
                                   EnsembleConfig config, bool concurrent_fanout)
    : base_(std::move(base)), signals_(std::move(signals)), config_(config),
      concurrent_(concurrent_fanout) {
  if (!base_) fail(ErrorKind::usage, "debiased provider needs a base provider");
  check_alpha(config_.alpha);
  bool has_expert = false, has_anti = false;
  for (const auto& s : signals_) {
    if (!s.expert && !s.anti_expert) {
      fail(ErrorKind::usage, "a signal needs an expert, an anti-expert or both");
    }
    if (!(s.weight >= 0.0) || !std::isfinite(s.weight)) {
      fail(ErrorKind::usage, "signal weights must be finite and nonnegative");
    }
    if (s.expert) {
      assert_compatible(*base_, *s.expert);
      has_expert = true;
    }
    if (s.anti_expert) {
      assert_compatible(*base_, *s.anti_expert);
      has_anti = true;
    }
  }
  switch (config_.mode) {
    case DebiasMode::none: break;
    case DebiasMode::full:
      if (signals_.empty()) fail(ErrorKind::usage, "mode full needs at least one signal");
      break;
    case DebiasMode::expert_only:
      if (!has_expert) fail(ErrorKind::usage, "mode expert_only needs an expert");
      break;
    case DebiasMode::anti_only:
      if (!has_anti) fail(ErrorKind::usage, "mode anti_only needs an anti-expert");
      break;
  }
}

std::string DebiasedProvider::name() const {
  return "debiased(" + base_->name() + ", mode=" + std::string(to_string(config_.mode)) + ")";
}

std::vector<double> DebiasedProvider::signal(std::span<const TokenId> context) const {
  const std::size_t n = base_->vocab_size();
  std::vector<double> total(n, 0.0);
  if (config_.mode == DebiasMode::none) return total;

  const bool use_expert = config_.mode != DebiasMode::anti_only;
  const bool use_anti = config_.mode != DebiasMode::expert_only;

  auto query = [&context](const ProviderPtr& provider) -> std::shared_future<LogitVector> {
    return std::async(std::launch::deferred, [&] { return provider->next_logits(context); });
  };
  auto query_async = [&context](const ProviderPtr& provider) -> std::shared_future<LogitVector> {
    return std::async(std::launch::async, [&] { return provider->next_logits(context); });
  };

  struct Pending {
    std::optional<std::shared_future<LogitVector>> plus;
    std::optional<std::shared_future<LogitVector>> minus;
    double coefficient;
  };
  std::vector<Pending> pending;
  pending.reserve(signals_.size());
  for (const auto& s : signals_) {
    Pending p{std::nullopt, std::nullopt, config_.alpha * s.weight};
    if (use_expert && s.expert) p.plus = concurrent_ ? query_async(s.expert) : query(s.expert);
    if (use_anti && s.anti_expert) {
      p.minus = concurrent_ ? query_async(s.anti_expert) : query(s.anti_expert);
    }
    pending.push_back(std::move(p));
  }

  auto fetch = [n](std::shared_future<LogitVector>& f, const char* role) {
    LogitVector z = f.get();
    if (z.size() != n) {
      fail(ErrorKind::protocol, std::string(role) + " returned " + std::to_string(z.size()) +
                                    " logits, expected " + std::to_string(n));
    }
    check_finite(z, role);
    return z;
  };

  for (auto& p : pending) {
    if (p.plus && p.minus) {
      const LogitVector zp = fetch(*p.plus, "expert");
      const LogitVector zm = fetch(*p.minus, "anti-expert");
      for (std::size_t i = 0; i < n; ++i) total[i] += p.coefficient * (zp[i] - zm[i]);
    } else if (p.plus) {
      const LogitVector zp = fetch(*p.plus, "expert");
      for (std::size_t i = 0; i < n; ++i) total[i] += p.coefficient * zp[i];
    } else if (p.minus) {
      const LogitVector zm = fetch(*p.minus, "anti-expert");
      for (std::size_t i = 0; i < n; ++i) total[i] -= p.coefficient * zm[i];
    }
  }
  return total;
}

LogitVector DebiasedProvider::next_logits(std::span<const TokenId> context) const {
  if (config_.mode == DebiasMode::none) return base_->next_logits(context);
  LogitVector z = base_->next_logits(context);
  if (z.size() != base_->vocab_size()) {
    fail(ErrorKind::protocol, "base returned " + std::to_string(z.size()) + " logits");
  }
  const std::vector<double> s = signal(context);
  for (std::size_t i = 0; i < z.size(); ++i) z.values[i] += s[i];
  return z;
}

ProviderPtr debiased_provider(ProviderPtr base, std::vector<SignalSpec> signals,
                              EnsembleConfig config, bool concurrent_fanout) {
  return std::make_shared<DebiasedProvider>(std::move(base), std::move(signals), config,
                                            concurrent_fanout);
}

ShiftReport probability_shift(const DistributionProvider& base,
                              const DistributionProvider& debiased, std::string_view prompt,
                              const std::vector<std::string>& candidates) {
  assert_compatible(base, debiased);
  if (candidates.empty()) fail(ErrorKind::usage, "no candidate tokens given");

  std::vector<TokenId> ids;
  std::string unknown;
  for (const auto& c : candidates) {
    auto id = base.single_token(c);
    if (!id) {
      unknown += unknown.empty() ? c : ", " + c;
      continue;
    }
    ids.push_back(*id);
  }
  if (!unknown.empty()) fail(ErrorKind::data, "unknown candidate token(s): " + unknown);

  const auto context = base.tokenize(prompt);
  const LogitVector zb = base.next_logits(context);
  const LogitVector zd = debiased.next_logits(context);
  const ProbVector pb = softmax(zb);
  const ProbVector pd = softmax(zd);

  ShiftReport report;
  report.prompt = std::string(prompt);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto i = static_cast<std::size_t>(ids[c]);
    ShiftRow row;
    row.token = candidates[c];
    row.id = ids[c];
    row.base_prob = pb[i];
    row.debiased_prob = pd[i];
    row.signal = zd[i] - zb[i];
    row.rank_before = rank_of(pb, i);
    row.rank_after = rank_of(pd, i);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace steered
