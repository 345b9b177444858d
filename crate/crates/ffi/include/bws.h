#ifndef BWS_H
#define BWS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BwsStatus {
  BWS_STATUS_OK = 0,
  /**
   * Input violated a documented precondition.
   */
  BWS_STATUS_INVALID = 1,
  /**
   * A file could not be read or written.
   */
  BWS_STATUS_IO = 2,
  /**
   * A required pointer argument was null.
   */
  BWS_STATUS_NULL_ARGUMENT = 3,
  /**
   * The statistic is undefined for the input, e.g. zero variance.
   */
  BWS_STATUS_DEGENERATE = 4,
  /**
   * An internal error; the library state is still usable.
   */
  BWS_STATUS_INTERNAL = 5,
} BwsStatus;

typedef enum BwsBoundMethod {
  BWS_BOUND_METHOD_WILSON = 0,
  BWS_BOUND_METHOD_CLOPPER_PEARSON = 1,
} BwsBoundMethod;

/**
 * Tuple design.
 */
typedef struct BwsDesign BwsDesign;

/**
 * Scores, sorted from highest to lowest.
 */
typedef struct BwsLexicon BwsLexicon;

/**
 * Responses validated against a design.
 */
typedef struct BwsResponses BwsResponses;

/**
 * Term list.
 */
typedef struct BwsTerms BwsTerms;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *bws_last_error(void);

/**
 * Library version as a static string.
 */
const char *bws_version(void);

/**
 * Loads terms: one per line, or `id,text` rows when the path ends in `.csv`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BwsStatus bws_terms_load(const char *path, struct BwsTerms **out);

/**
 * # Safety
 * `terms` must be a live handle or null.
 */
size_t bws_terms_count(const struct BwsTerms *terms);

/**
 * # Safety
 * `terms` must come from this library and not be used afterwards. Null is ignored.
 */
void bws_terms_free(struct BwsTerms *terms);

/**
 * Generates `round(multiplier * n)` tuples over the terms.
 *
 * # Safety
 * `terms` must be a live handle and `out` a valid pointer.
 */
enum BwsStatus bws_design_generate(const struct BwsTerms *terms,
                                   double multiplier,
                                   uint64_t seed,
                                   struct BwsDesign **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BwsStatus bws_design_load(const char *path, struct BwsDesign **out);

/**
 * Writes the design as tuples CSV.
 *
 * # Safety
 * `design` must be a live handle and `path` a NUL-terminated string.
 */
enum BwsStatus bws_design_save(const struct BwsDesign *design, const char *path);

/**
 * # Safety
 * `design` must be a live handle or null.
 */
size_t bws_design_count(const struct BwsDesign *design);

/**
 * Checks the design against the balance criteria. `*passed` is set to 1
 * when all hold and 0 otherwise.
 *
 * # Safety
 * `design` and `terms` must be live handles and `passed` a valid pointer.
 */
enum BwsStatus bws_design_verify(const struct BwsDesign *design,
                                 const struct BwsTerms *terms,
                                 int32_t *passed);

/**
 * # Safety
 * `design` must come from this library and not be used afterwards. Null is ignored.
 */
void bws_design_free(struct BwsDesign *design);

/**
 * Loads a responses CSV and checks it against `design`. With `permissive`
 * nonzero, rows naming unknown tuples are dropped instead of failing.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `design` a live handle and `out` a valid pointer.
 */
enum BwsStatus bws_responses_load(const char *path,
                                  const struct BwsDesign *design,
                                  int32_t permissive,
                                  struct BwsResponses **out);

/**
 * # Safety
 * `responses` must be a live handle or null.
 */
size_t bws_responses_count(const struct BwsResponses *responses);

/**
 * # Safety
 * `responses` must come from this library and not be used afterwards. Null is ignored.
 */
void bws_responses_free(struct BwsResponses *responses);

/**
 * Scores every term. Strict mode fails when a term never appears in an
 * answered tuple; permissive mode leaves such terms out.
 *
 * # Safety
 * `design` and `responses` must be live handles and `out` a valid pointer.
 */
enum BwsStatus bws_score(const struct BwsDesign *design,
                         const struct BwsResponses *responses,
                         int32_t permissive,
                         struct BwsLexicon **out);

/**
 * # Safety
 * `lexicon` must be a live handle or null.
 */
size_t bws_lexicon_len(const struct BwsLexicon *lexicon);

/**
 * Entry `index` in rank order. `*term_id` borrows from the lexicon and is
 * valid until it is freed.
 *
 * # Safety
 * `lexicon` must be a live handle; `term_id` and `score` valid pointers.
 */
enum BwsStatus bws_lexicon_entry(const struct BwsLexicon *lexicon,
                                 size_t index,
                                 const char **term_id,
                                 double *score);

/**
 * Writes the lexicon as `label<TAB>score` lines. Labels are term texts when
 * `terms` is non-null and ids otherwise.
 *
 * # Safety
 * `lexicon` must be a live handle, `terms` a live handle or null, `path` a NUL-terminated string.
 */
enum BwsStatus bws_lexicon_save(const struct BwsLexicon *lexicon,
                                const struct BwsTerms *terms,
                                const char *path);

/**
 * # Safety
 * `lexicon` must come from this library and not be used afterwards. Null is ignored.
 */
void bws_lexicon_free(struct BwsLexicon *lexicon);

/**
 * Mean split-half correlations over `iterations` random splits.
 *
 * # Safety
 * `design` and `responses` must be live handles; output pointers valid.
 */
enum BwsStatus bws_split_half(const struct BwsDesign *design,
                              const struct BwsResponses *responses,
                              size_t iterations,
                              uint64_t seed,
                              double *spearman_mean,
                              double *pearson_mean);

/**
 * Spearman rank correlation of two arrays of length `n`, ties averaged.
 *
 * # Safety
 * `a` and `b` must point to `n` doubles; `out` must be valid.
 */
enum BwsStatus bws_spearman(const double *a, const double *b, size_t n, double *out);

/**
 * Pearson correlation of two arrays of length `n`.
 *
 * # Safety
 * `a` and `b` must point to `n` doubles; `out` must be valid.
 */
enum BwsStatus bws_pearson(const double *a, const double *b, size_t n, double *out);

/**
 * One-sided lower confidence bound for a binomial proportion.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum BwsStatus bws_binom_lower_bound(uint64_t successes,
                                     uint64_t trials,
                                     double confidence,
                                     enum BwsBoundMethod method,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BWS_H */
