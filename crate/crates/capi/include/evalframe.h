#ifndef EVALFRAME_H
#define EVALFRAME_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible entry points.
 */
typedef enum EfStatus {
  EfStatus_Ok = 0,
  EfStatus_NullPointer = 1,
  EfStatus_InvalidUtf8 = 2,
  EfStatus_InvalidInput = 3,
  EfStatus_Io = 4,
  EfStatus_Parse = 5,
  EfStatus_Runtime = 6,
} EfStatus;

/**
 * Opaque handle to a loaded dataset.
 */
typedef struct EfDataset {
  uint8_t _private[0];
} EfDataset;

/**
 * Opaque handle to a completed evaluation report.
 */
typedef struct EfReport {
  uint8_t _private[0];
} EfReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *ef_last_error(void);

/**
 * Free a string previously returned by this library. Null is a no-op.
 */
void ef_string_free(char *s);

/**
 * Load an NDJSON dataset from `path`. Returns null on failure.
 */
struct EfDataset *ef_dataset_load(const char *path);

void ef_dataset_free(struct EfDataset *ds);

/**
 * Number of items in the dataset; 0 for a null handle.
 */
uintptr_t ef_dataset_item_count(const struct EfDataset *ds);

/**
 * Run invariant checks. Returns the violation count, or -1 on a null handle.
 * A newline-separated description is written to `*out_detail` when non-null
 * and violations exist (free with `ef_string_free`).
 */
int64_t ef_dataset_validate(const struct EfDataset *ds, char **out_detail);

/**
 * Sample size for a target margin of error at the given confidence level.
 */
enum EfStatus ef_required_sample_size(double confidence,
                                      double expected_metric,
                                      double margin,
                                      uint64_t *out_n);

/**
 * ROUGE-N F-measure of `candidate` against a single reference.
 */
enum EfStatus ef_rouge_n(const char *candidate, const char *reference, uint32_t n, double *out_f);

/**
 * BLEU score of `candidate` against a single reference.
 */
enum EfStatus ef_bleu(const char *candidate, const char *reference, double *out_score);

/**
 * Fraction of `terms` (array of `n_terms` C strings) present in `response`.
 */
enum EfStatus ef_keyword_recall(const char *response,
                                const char *const *terms,
                                uintptr_t n_terms,
                                double *out_recall);

/**
 * Execute a full evaluation run from a JSON config file. Returns null on
 * failure; the report is also written to the path named in the config.
 */
struct EfReport *ef_run_eval(const char *config_path);

/**
 * Load a previously written report JSON file. Returns null on failure.
 */
struct EfReport *ef_report_load(const char *path);

void ef_report_free(struct EfReport *report);

/**
 * Canonical JSON rendering of the report (free with `ef_string_free`).
 */
char *ef_report_to_json(const struct EfReport *report);

/**
 * Config hash of the run that produced this report (free with
 * `ef_string_free`).
 */
char *ef_report_config_hash(const struct EfReport *report);

/**
 * Compare two reports with paired tests at significance level `alpha`.
 * `metric` restricts the comparison to one metric when non-null. On success
 * `*out_regression` is set to 1 if any compared metric shows a statistically
 * significant regression from A to B, else 0.
 */
enum EfStatus ef_compare_runs(const struct EfReport *report_a,
                              const struct EfReport *report_b,
                              const char *metric,
                              double alpha,
                              int32_t *out_regression);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVALFRAME_H */
