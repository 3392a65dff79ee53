/*
 * C interface to the steered decoding engine.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every fallible call returns an sd_status; on failure sd_last_error()
 * describes the problem (thread-local, valid until the next call on the
 * same thread). Strings returned through char** are owned by the caller and
 * released with sd_string_free.
 */
#ifndef STEERED_STEERED_H
#define STEERED_STEERED_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(STEERED_BUILDING)
#    define SD_API __declspec(dllexport)
#  else
#    define SD_API __declspec(dllimport)
#  endif
#else
#  define SD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sd_status {
  SD_OK = 0,
  SD_ERR_USAGE = 1,
  SD_ERR_DATA = 2,
  SD_ERR_IO = 3,
  SD_ERR_OUT_OF_RANGE = 4,
  SD_ERR_INCOMPATIBLE = 5,
  SD_ERR_TRANSPORT = 6,
  SD_ERR_PROTOCOL = 7,
  SD_ERR_INTERNAL = 8,
  SD_ERR_BUFFER_TOO_SMALL = 9
} sd_status;

typedef enum sd_mode {
  SD_MODE_NONE = 0,
  SD_MODE_FULL = 1,
  SD_MODE_EXPERT_ONLY = 2,
  SD_MODE_ANTI_ONLY = 3
} sd_mode;

typedef struct sd_vocab sd_vocab;
typedef struct sd_provider sd_provider;

/* Either side may be NULL, not both. */
typedef struct sd_signal {
  const sd_provider* expert;
  const sd_provider* anti_expert;
  double weight;
} sd_signal;

SD_API const char* sd_version(void);
SD_API const char* sd_last_error(void);
SD_API const char* sd_status_name(sd_status status);
/* CLI exit code for a status: 0 ok, 1 usage, 2 data, 3 transport. */
SD_API int sd_exit_code(sd_status status);
SD_API void sd_string_free(char* s);

/* Vocabulary */
SD_API sd_status sd_vocab_build(const char* const* documents, size_t n_documents,
                                int min_count, sd_vocab** out);
SD_API sd_status sd_vocab_load(const char* path, sd_vocab** out);
SD_API sd_status sd_vocab_save(const sd_vocab* vocab, const char* path);
SD_API void sd_vocab_free(sd_vocab* vocab);
SD_API size_t sd_vocab_size(const sd_vocab* vocab);
SD_API uint64_t sd_vocab_fingerprint(const sd_vocab* vocab);
/* Writes up to `capacity` ids; *n_ids always receives the full count.
 * Returns SD_ERR_BUFFER_TOO_SMALL when capacity < *n_ids. */
SD_API sd_status sd_vocab_tokenize(const sd_vocab* vocab, const char* text, int32_t* ids,
                                   size_t capacity, size_t* n_ids);
SD_API sd_status sd_vocab_detokenize(const sd_vocab* vocab, const int32_t* ids, size_t n_ids,
                                     char** text);

/* Providers */
SD_API sd_status sd_provider_uniform(const sd_vocab* vocab, sd_provider** out);
SD_API sd_status sd_provider_ngram_train(const sd_vocab* vocab, const char* const* sentences,
                                         size_t n_sentences, int order, double k,
                                         sd_provider** out);
SD_API sd_status sd_provider_ngram_load(const sd_vocab* vocab, const char* path,
                                        sd_provider** out);
SD_API sd_status sd_provider_ngram_save(const sd_provider* provider, const char* path);
SD_API sd_status sd_provider_remote(const char* url, int timeout_ms, sd_provider** out);
SD_API sd_status sd_provider_debiased(const sd_provider* base, const sd_signal* signals,
                                      size_t n_signals, double alpha, sd_mode mode,
                                      sd_provider** out);
SD_API void sd_provider_free(sd_provider* provider);
SD_API size_t sd_provider_vocab_size(const sd_provider* provider);
SD_API uint64_t sd_provider_fingerprint(const sd_provider* provider);
SD_API sd_status sd_provider_compatible(const sd_provider* a, const sd_provider* b);
/* `logits` must hold sd_provider_vocab_size() values. */
SD_API sd_status sd_provider_next_logits(const sd_provider* provider, const int32_t* context,
                                         size_t n_context, double* logits, size_t capacity);
SD_API sd_status sd_provider_tokenize(const sd_provider* provider, const char* text,
                                      int32_t* ids, size_t capacity, size_t* n_ids);

/* Ensemble and metrics math over raw arrays of length n */
SD_API sd_status sd_combine_logits(const double* z, const double* z_plus, const double* z_minus,
                                   size_t n, double alpha, double* probs_out);
SD_API sd_status sd_combine_product_form(const double* p, const double* p_plus,
                                         const double* p_minus, size_t n, double alpha,
                                         double* probs_out);
SD_API sd_status sd_hellinger(const double* p, const double* q, size_t n, double* out);
SD_API sd_status sd_perplexity(const sd_provider* provider, const int32_t* ids, size_t n_ids,
                               double* out);

/* Pipeline commands: JSON request in, JSON result out. */
SD_API sd_status sd_run_build_vocab(const char* request_json, char** result_json);
SD_API sd_status sd_run_train(const char* request_json, char** result_json);
SD_API sd_status sd_run_generate(const char* request_json, char** result_json);
SD_API sd_status sd_run_inspect(const char* request_json, char** result_json);
SD_API sd_status sd_run_eval(const char* request_json, char** result_json);
SD_API sd_status sd_run_eval_matrix(const char* request_json, char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* STEERED_STEERED_H */
