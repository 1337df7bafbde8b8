#ifndef WORKPULSE_H
#define WORKPULSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WpStatus {
  WP_STATUS_OK = 0,
  WP_STATUS_NULL_POINTER = 1,
  WP_STATUS_INVALID_UTF8 = 2,
  WP_STATUS_INVALID_ARGUMENT = 3,
  WP_STATUS_IO = 4,
  WP_STATUS_FORMAT = 5,
  WP_STATUS_NOT_FOUND = 6,
  WP_STATUS_DEGENERATE_MODEL = 7,
  WP_STATUS_PANIC = 99,
} WpStatus;

/**
 * Word-category lexicon.
 */
typedef struct WpLexicon WpLexicon;

/**
 * Trained classifier.
 */
typedef struct WpModel WpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *wp_last_error_message(void);

void wp_string_free(char *s);

/**
 * Normalized text (lowercased, mentions and links replaced). The result
 * must be released with `wp_string_free`.
 */
int32_t wp_normalize(const char *text, char **out);

int32_t wp_model_load(const char *path, struct WpModel **out);

void wp_model_free(struct WpModel *model);

size_t wp_model_num_features(const struct WpModel *model);

/**
 * Signed distance of `text` from the model's hyperplane; positive means
 * job-related.
 */
int32_t wp_model_score(const struct WpModel *model, const char *text, double *out);

int32_t wp_lexicon_parse(const char *source, struct WpLexicon **out);

int32_t wp_lexicon_load(const char *path, struct WpLexicon **out);

void wp_lexicon_free(struct WpLexicon *lexicon);

/**
 * Share of the tokens of `text` matched by `category`. `matches` may be null.
 */
int32_t wp_lexicon_score(const struct WpLexicon *lexicon,
                         const char *text,
                         const char *category,
                         double *ratio,
                         size_t *matches);

/**
 * Fleiss' kappa over a row-major `n_items x n_categories` count table whose
 * rows each sum to `raters`.
 */
int32_t wp_fleiss_kappa(const uint32_t *counts,
                        size_t n_items,
                        size_t n_categories,
                        size_t raters,
                        double *out);

/**
 * Nominal Krippendorff's alpha over a row-major `n_items x n_coders` grid
 * of category codes; negative codes mark missing values.
 */
int32_t wp_krippendorff_alpha(const int32_t *values, size_t n_items, size_t n_coders, double *out);

/**
 * Tau-b between two score arrays over the same `n` items.
 */
int32_t wp_kendall_tau(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WORKPULSE_H */
