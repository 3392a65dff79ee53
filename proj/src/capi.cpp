#include "steered/steered.h"

#include <cstring>
#include <memory>
#include <string>

#include "steered/ensemble.hpp"
#include "steered/error.hpp"
#include "steered/metrics.hpp"
#include "steered/ngram.hpp"
#include "steered/pipeline.hpp"
#include "steered/remote.hpp"

struct sd_vocab {
  std::shared_ptr<const steered::Vocabulary> vocab;
};

struct sd_provider {
  steered::ProviderPtr provider;
};

namespace {

using steered::ErrorKind;

thread_local std::string last_error;

sd_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return SD_ERR_USAGE;
    case ErrorKind::data: return SD_ERR_DATA;
    case ErrorKind::io: return SD_ERR_IO;
    case ErrorKind::out_of_range: return SD_ERR_OUT_OF_RANGE;
    case ErrorKind::incompatible: return SD_ERR_INCOMPATIBLE;
    case ErrorKind::transport: return SD_ERR_TRANSPORT;
    case ErrorKind::protocol: return SD_ERR_PROTOCOL;
    case ErrorKind::internal: return SD_ERR_INTERNAL;
  }
  return SD_ERR_INTERNAL;
}

template <typename Fn>
sd_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const steered::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("invalid JSON request: ") + e.what();
    return SD_ERR_USAGE;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SD_ERR_INTERNAL;
  }
}

sd_status null_argument(const char* name) {
  last_error = std::string("null argument: ") + name;
  return SD_ERR_USAGE;
}

char* duplicate(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

sd_status copy_ids(const std::vector<steered::TokenId>& ids, int32_t* out, size_t capacity,
                   size_t* n_ids) {
  *n_ids = ids.size();
  if (capacity < ids.size()) {
    last_error = "buffer holds " + std::to_string(capacity) + " ids, need " +
                 std::to_string(ids.size());
    return SD_ERR_BUFFER_TOO_SMALL;
  }
  if (!ids.empty()) std::memcpy(out, ids.data(), ids.size() * sizeof(int32_t));
  return SD_OK;
}

steered::ProbVector to_probs(const double* p, size_t n) { return {std::vector<double>(p, p + n)}; }
steered::LogitVector to_logits(const double* z, size_t n) { return {std::vector<double>(z, z + n)}; }

template <typename Fn>
sd_status run_command(const char* request_json, char** result_json, Fn&& command) {
  if (!request_json) return null_argument("request_json");
  if (!result_json) return null_argument("result_json");
  *result_json = nullptr;
  return guarded([&] {
    const auto request = steered::pipeline::json::parse(request_json);
    *result_json = duplicate(command(request).dump());
    return SD_OK;
  });
}

}  // namespace

extern "C" {

const char* sd_version(void) { return "0.1.0"; }

const char* sd_last_error(void) { return last_error.c_str(); }

const char* sd_status_name(sd_status status) {
  switch (status) {
    case SD_OK: return "ok";
    case SD_ERR_USAGE: return "usage";
    case SD_ERR_DATA: return "data";
    case SD_ERR_IO: return "io";
    case SD_ERR_OUT_OF_RANGE: return "out_of_range";
    case SD_ERR_INCOMPATIBLE: return "incompatible";
    case SD_ERR_TRANSPORT: return "transport";
    case SD_ERR_PROTOCOL: return "protocol";
    case SD_ERR_INTERNAL: return "internal";
    case SD_ERR_BUFFER_TOO_SMALL: return "buffer_too_small";
  }
  return "unknown";
}

int sd_exit_code(sd_status status) {
  switch (status) {
    case SD_OK: return 0;
    case SD_ERR_USAGE: return 1;
    case SD_ERR_TRANSPORT:
    case SD_ERR_PROTOCOL: return 3;
    default: return 2;
  }
}

void sd_string_free(char* s) { delete[] s; }

sd_status sd_vocab_build(const char* const* documents, size_t n_documents, int min_count,
                         sd_vocab** out) {
  if (!out) return null_argument("out");
  if (!documents && n_documents) return null_argument("documents");
  return guarded([&] {
    std::vector<std::string> docs;
    for (size_t i = 0; i < n_documents; ++i) docs.emplace_back(documents[i] ? documents[i] : "");
    *out = new sd_vocab{std::make_shared<const steered::Vocabulary>(steered::build_vocab(docs, min_count))};
    return SD_OK;
  });
}

sd_status sd_vocab_load(const char* path, sd_vocab** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = new sd_vocab{std::make_shared<const steered::Vocabulary>(steered::Vocabulary::load(path))};
    return SD_OK;
  });
}

sd_status sd_vocab_save(const sd_vocab* vocab, const char* path) {
  if (!vocab) return null_argument("vocab");
  if (!path) return null_argument("path");
  return guarded([&] {
    vocab->vocab->save(path);
    return SD_OK;
  });
}

void sd_vocab_free(sd_vocab* vocab) { delete vocab; }

size_t sd_vocab_size(const sd_vocab* vocab) { return vocab ? vocab->vocab->size() : 0; }

uint64_t sd_vocab_fingerprint(const sd_vocab* vocab) {
  return vocab ? vocab->vocab->fingerprint() : 0;
}

sd_status sd_vocab_tokenize(const sd_vocab* vocab, const char* text, int32_t* ids,
                            size_t capacity, size_t* n_ids) {
  if (!vocab) return null_argument("vocab");
  if (!text) return null_argument("text");
  if (!n_ids) return null_argument("n_ids");
  return guarded([&] { return copy_ids(steered::tokenize(*vocab->vocab, text).ids, ids, capacity, n_ids); });
}

sd_status sd_vocab_detokenize(const sd_vocab* vocab, const int32_t* ids, size_t n_ids, char** text) {
  if (!vocab) return null_argument("vocab");
  if (!ids && n_ids) return null_argument("ids");
  if (!text) return null_argument("text");
  return guarded([&] {
    *text = duplicate(steered::detokenize(*vocab->vocab, std::span<const int32_t>(ids, n_ids)));
    return SD_OK;
  });
}

sd_status sd_provider_uniform(const sd_vocab* vocab, sd_provider** out) {
  if (!vocab) return null_argument("vocab");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = new sd_provider{steered::uniform_provider(vocab->vocab)};
    return SD_OK;
  });
}

sd_status sd_provider_ngram_train(const sd_vocab* vocab, const char* const* sentences,
                                  size_t n_sentences, int order, double k, sd_provider** out) {
  if (!vocab) return null_argument("vocab");
  if (!sentences && n_sentences) return null_argument("sentences");
  if (!out) return null_argument("out");
  return guarded([&] {
    std::vector<std::vector<steered::TokenId>> corpus;
    for (size_t i = 0; i < n_sentences; ++i) {
      corpus.push_back(steered::tokenize(*vocab->vocab, sentences[i] ? sentences[i] : "").ids);
    }
    *out = new sd_provider{
        std::make_shared<steered::NGramModel>(steered::train_ngram(corpus, order, k, vocab->vocab))};
    return SD_OK;
  });
}

sd_status sd_provider_ngram_load(const sd_vocab* vocab, const char* path, sd_provider** out) {
  if (!vocab) return null_argument("vocab");
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = new sd_provider{
        std::make_shared<steered::NGramModel>(steered::NGramModel::load(path, vocab->vocab))};
    return SD_OK;
  });
}

sd_status sd_provider_ngram_save(const sd_provider* provider, const char* path) {
  if (!provider) return null_argument("provider");
  if (!path) return null_argument("path");
  return guarded([&] {
    const auto* model = dynamic_cast<const steered::NGramModel*>(provider->provider.get());
    if (!model) steered::fail(ErrorKind::usage, "provider is not an n-gram model");
    model->save(path);
    return SD_OK;
  });
}

sd_status sd_provider_remote(const char* url, int timeout_ms, sd_provider** out) {
  if (!url) return null_argument("url");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = new sd_provider{std::make_shared<steered::RemoteProvider>(steered::handshake(url, timeout_ms))};
    return SD_OK;
  });
}

sd_status sd_provider_debiased(const sd_provider* base, const sd_signal* signals, size_t n_signals,
                               double alpha, sd_mode mode, sd_provider** out) {
  if (!base) return null_argument("base");
  if (!signals && n_signals) return null_argument("signals");
  if (!out) return null_argument("out");
  return guarded([&] {
    std::vector<steered::SignalSpec> specs;
    for (size_t i = 0; i < n_signals; ++i) {
      specs.push_back({signals[i].expert ? signals[i].expert->provider : nullptr,
                       signals[i].anti_expert ? signals[i].anti_expert->provider : nullptr,
                       signals[i].weight});
    }
    steered::EnsembleConfig config;
    config.alpha = alpha;
    switch (mode) {
      case SD_MODE_NONE: config.mode = steered::DebiasMode::none; break;
      case SD_MODE_FULL: config.mode = steered::DebiasMode::full; break;
      case SD_MODE_EXPERT_ONLY: config.mode = steered::DebiasMode::expert_only; break;
      case SD_MODE_ANTI_ONLY: config.mode = steered::DebiasMode::anti_only; break;
      default: steered::fail(ErrorKind::usage, "unknown mode " + std::to_string(mode));
    }
    *out = new sd_provider{steered::debiased_provider(base->provider, std::move(specs), config)};
    return SD_OK;
  });
}

void sd_provider_free(sd_provider* provider) { delete provider; }

size_t sd_provider_vocab_size(const sd_provider* provider) {
  return provider ? provider->provider->vocab_size() : 0;
}

uint64_t sd_provider_fingerprint(const sd_provider* provider) {
  return provider ? provider->provider->vocab_fingerprint() : 0;
}

sd_status sd_provider_compatible(const sd_provider* a, const sd_provider* b) {
  if (!a) return null_argument("a");
  if (!b) return null_argument("b");
  return guarded([&] {
    steered::assert_compatible(*a->provider, *b->provider);
    return SD_OK;
  });
}

sd_status sd_provider_next_logits(const sd_provider* provider, const int32_t* context,
                                  size_t n_context, double* logits, size_t capacity) {
  if (!provider) return null_argument("provider");
  if (!context && n_context) return null_argument("context");
  if (!logits) return null_argument("logits");
  return guarded([&] {
    const auto z = provider->provider->next_logits(std::span<const int32_t>(context, n_context));
    if (capacity < z.size()) {
      last_error = "logit buffer holds " + std::to_string(capacity) + " values, need " +
                   std::to_string(z.size());
      return SD_ERR_BUFFER_TOO_SMALL;
    }
    std::memcpy(logits, z.values.data(), z.size() * sizeof(double));
    return SD_OK;
  });
}

sd_status sd_provider_tokenize(const sd_provider* provider, const char* text, int32_t* ids,
                               size_t capacity, size_t* n_ids) {
  if (!provider) return null_argument("provider");
  if (!text) return null_argument("text");
  if (!n_ids) return null_argument("n_ids");
  return guarded([&] { return copy_ids(provider->provider->tokenize(text), ids, capacity, n_ids); });
}

sd_status sd_combine_logits(const double* z, const double* z_plus, const double* z_minus, size_t n,
                            double alpha, double* probs_out) {
  if (!z || !z_plus || !z_minus || !probs_out) return null_argument("array");
  return guarded([&] {
    const auto p = steered::combine_logits(to_logits(z, n), to_logits(z_plus, n), to_logits(z_minus, n), alpha);
    std::memcpy(probs_out, p.values.data(), n * sizeof(double));
    return SD_OK;
  });
}

sd_status sd_combine_product_form(const double* p, const double* p_plus, const double* p_minus,
                                  size_t n, double alpha, double* probs_out) {
  if (!p || !p_plus || !p_minus || !probs_out) return null_argument("array");
  return guarded([&] {
    const auto q = steered::combine_product_form(to_probs(p, n), to_probs(p_plus, n), to_probs(p_minus, n), alpha);
    std::memcpy(probs_out, q.values.data(), n * sizeof(double));
    return SD_OK;
  });
}

sd_status sd_hellinger(const double* p, const double* q, size_t n, double* out) {
  if (!p || !q || !out) return null_argument("array");
  return guarded([&] {
    *out = steered::hellinger(to_probs(p, n), to_probs(q, n));
    return SD_OK;
  });
}

sd_status sd_perplexity(const sd_provider* provider, const int32_t* ids, size_t n_ids, double* out) {
  if (!provider) return null_argument("provider");
  if (!ids && n_ids) return null_argument("ids");
  if (!out) return null_argument("out");
  return guarded([&] {
    *out = steered::perplexity(*provider->provider, std::span<const int32_t>(ids, n_ids));
    return SD_OK;
  });
}

sd_status sd_run_build_vocab(const char* request_json, char** result_json) {
  return run_command(request_json, result_json, steered::pipeline::run_build_vocab);
}

sd_status sd_run_train(const char* request_json, char** result_json) {
  return run_command(request_json, result_json, steered::pipeline::run_train);
}

sd_status sd_run_generate(const char* request_json, char** result_json) {
  return run_command(request_json, result_json, steered::pipeline::run_generate);
}

sd_status sd_run_inspect(const char* request_json, char** result_json) {
  return run_command(request_json, result_json, steered::pipeline::run_inspect);
}

sd_status sd_run_eval(const char* request_json, char** result_json) {
  return run_command(request_json, result_json, steered::pipeline::run_eval);
}

sd_status sd_run_eval_matrix(const char* request_json, char** result_json) {
  return run_command(request_json, result_json, steered::pipeline::run_eval_matrix);
}

}  // extern "C"
