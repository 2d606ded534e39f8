#ifndef GP2F_H
#define GP2F_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call. Values 1 to 5 match the CLI exit codes.
typedef enum Gp2fStatus {
  GP2F_STATUS_OK = 0,
  GP2F_STATUS_OTHER = 1,
  GP2F_STATUS_USAGE = 2,
  GP2F_STATUS_INGESTION = 3,
  GP2F_STATUS_NUMERIC = 4,
  GP2F_STATUS_ASSUMPTION = 5,
  GP2F_STATUS_NULL_POINTER = 6,
  GP2F_STATUS_PANIC = 7,
} Gp2fStatus;

typedef struct Gp2fCheckpoint Gp2fCheckpoint;

typedef struct Gp2fGraph Gp2fGraph;

typedef struct Gp2fReport Gp2fReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *gp2f_last_error(void);

// # Safety
// `s` must come from this library and not have been freed.
void gp2f_string_free(char *s);

// Library version as a static string.
const char *gp2f_version(void);

// # Safety
// `lambda_star` must be a valid pointer to writable memory.
enum Gp2fStatus gp2f_optimal_lambda(double sigma_g2,
                                    double sigma_a2,
                                    double rho,
                                    double *lambda_star);

// # Safety
// `mse` must be a valid pointer to writable memory.
enum Gp2fStatus gp2f_mse_curve(double sigma_g2,
                               double sigma_a2,
                               double rho,
                               double lambda,
                               double *mse);

// # Safety
// `mse` must be a valid pointer to writable memory.
enum Gp2fStatus gp2f_mse_at_optimum(double sigma_g2, double sigma_a2, double rho, double *mse);

// Monte Carlo MSE of the mixed estimator at `lambda` from `samples` draws.
//
// # Safety
// `mean` and `std_error` must be valid pointers to writable memory.
enum Gp2fStatus gp2f_monte_carlo_mse(double sigma_g2,
                                     double sigma_a2,
                                     double rho,
                                     size_t dim,
                                     uint64_t seed,
                                     double lambda,
                                     size_t samples,
                                     double *mean,
                                     double *std_error);

// Misclassification bound for `classes` classes, norm bound `radius`,
// margin `gamma` and embedding MSE `mse`.
//
// # Safety
// `unclamped` and `clamped` must be valid pointers to writable memory.
enum Gp2fStatus gp2f_corollary_bound(size_t classes,
                                     double radius,
                                     double gamma,
                                     double mse,
                                     double *unclamped,
                                     double *clamped);

// Load a graph from whitespace-separated text files. `labels_path` may be null.
//
// # Safety
// Paths must be null or NUL-terminated strings; `graph` must be writable.
enum Gp2fStatus gp2f_graph_load(const char *features_path,
                                const char *edges_path,
                                const char *labels_path,
                                struct Gp2fGraph **graph);

// Generate a source/target SBM pair. A null `spec_json` uses the built-in spec.
//
// # Safety
// `spec_json` must be null or a NUL-terminated string; `source` and `target` must be writable.
enum Gp2fStatus gp2f_graph_generate_pair(const char *spec_json,
                                         uint64_t seed,
                                         struct Gp2fGraph **source,
                                         struct Gp2fGraph **target);

// Node count, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t gp2f_graph_num_nodes(const struct Gp2fGraph *graph);

// Undirected edge count, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t gp2f_graph_num_edges(const struct Gp2fGraph *graph);

// # Safety
// `graph` must be null or a handle from this library that has not been freed.
void gp2f_graph_free(struct Gp2fGraph *graph);

// Pre-train an encoder on `source`. A null `config_json` uses defaults.
//
// # Safety
// `source` must be a live handle, `config_json` null or NUL-terminated, `checkpoint` writable.
enum Gp2fStatus gp2f_pretrain(const struct Gp2fGraph *source,
                              const char *config_json,
                              struct Gp2fCheckpoint **checkpoint);

// # Safety
// `path` must be NUL-terminated; `checkpoint` must be writable.
enum Gp2fStatus gp2f_checkpoint_load(const char *path, struct Gp2fCheckpoint **checkpoint);

// # Safety
// `checkpoint` must be a live handle and `path` NUL-terminated.
enum Gp2fStatus gp2f_checkpoint_save(const struct Gp2fCheckpoint *checkpoint, const char *path);

// Encoder width, or 0 for a null handle.
//
// # Safety
// `checkpoint` must be null or a live handle.
size_t gp2f_checkpoint_hidden_dim(const struct Gp2fCheckpoint *checkpoint);

// # Safety
// `checkpoint` must be null or a handle from this library that has not been freed.
void gp2f_checkpoint_free(struct Gp2fCheckpoint *checkpoint);

// Run the few-shot protocol on `target`. A null `config_json` uses defaults.
//
// # Safety
// `target` and `checkpoint` must be live handles, `config_json` null or
// NUL-terminated, `report` writable.
enum Gp2fStatus gp2f_run_protocol(const struct Gp2fGraph *target,
                                  const struct Gp2fCheckpoint *checkpoint,
                                  const char *config_json,
                                  size_t workers,
                                  struct Gp2fReport **report);

// Number of individual runs in the report, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
size_t gp2f_report_num_runs(const struct Gp2fReport *report);

// Mean and sample standard deviation of a variant's accuracy.
//
// # Safety
// `report` must be a live handle, `variant` NUL-terminated, `mean` and `std` writable.
enum Gp2fStatus gp2f_report_accuracy(const struct Gp2fReport *report,
                                     const char *variant,
                                     double *mean,
                                     double *std);

// Per-run results as CSV. Free with [`gp2f_string_free`]. Null on a null handle.
//
// # Safety
// `report` must be null or a live handle.
char *gp2f_report_results_csv(const struct Gp2fReport *report);

// Per-variant summary as JSON. Free with [`gp2f_string_free`]. Null on failure.
//
// # Safety
// `report` must be null or a live handle.
char *gp2f_report_summary_json(const struct Gp2fReport *report);

// # Safety
// `report` must be null or a handle from this library that has not been freed.
void gp2f_report_free(struct Gp2fReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GP2F_H */
