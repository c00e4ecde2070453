/* zopo - query-budgeted black-box optimization over finite candidate pools.
 *
 * C API of the shared library. All functions return a zopo_status code;
 * ZOPO_OK (0) means success. On failure, zopo_last_error() returns a
 * thread-local human-readable message describing the most recent error.
 *
 * Objects are opaque handles created by zopo_*_create/load functions and
 * released with the matching zopo_*_free. Handles are not reference counted;
 * freeing a handle twice, or using it after free, is undefined. Unless noted
 * otherwise, `const char*` values returned through out-parameters are
 * borrowed from the handle and remain valid until the handle is freed.
 */
#ifndef ZOPO_H
#define ZOPO_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int zopo_status;

#define ZOPO_OK 0
#define ZOPO_ERR_ARGUMENT 1  /* invalid arguments, malformed config */
#define ZOPO_ERR_IO 2        /* unreadable input or unwritable output */
#define ZOPO_ERR_RUN 3       /* run-fatal failure (evaluator, table miss) */
#define ZOPO_ERR_NUMERIC 4   /* linear algebra failure */
#define ZOPO_ERR_EXHAUSTED 5 /* candidate pool exhausted */

typedef struct zopo_pool zopo_pool;
typedef struct zopo_objective zopo_objective;
typedef struct zopo_trace zopo_trace;

const char* zopo_version(void);

/* Thread-local message for the most recent failure on this thread; never
 * NULL. Overwritten by the next failing call. */
const char* zopo_last_error(void);

/* ------------------------------------------------------------------ pools */

/* Loads a line-delimited JSON pool file:
 *   {"id": str, "embedding": [num,...], "text": str?, "score": num?}
 * Duplicate ids or embeddings are dropped (first occurrence wins).
 * dimension_hint <= 0 means "infer from the first record". */
zopo_status zopo_pool_load(const char* path, int dimension_hint,
                           zopo_pool** out);

/* Builds a synthetic benchmark task from a spec string such as
 * "rkhs,d=32,pool=500,seed=1,noise=0.02" (families: rkhs, mlp, mlp-matched).
 * Returns the generated pool and its objective; metadata out-params may be
 * NULL. true_best_id must have room for at least 32 bytes. */
zopo_status zopo_synthetic_create(const char* spec, zopo_pool** out_pool,
                                  zopo_objective** out_objective,
                                  char* true_best_id, double* true_best_score,
                                  long long* local_optima_count);

void zopo_pool_free(zopo_pool* pool);

zopo_status zopo_pool_size(const zopo_pool* pool, size_t* out);
zopo_status zopo_pool_dimension(const zopo_pool* pool, int* out);
zopo_status zopo_pool_dropped(const zopo_pool* pool, size_t* out);

/* Borrowed id of the index-th candidate (insertion order). */
zopo_status zopo_pool_candidate_id(const zopo_pool* pool, size_t index,
                                   const char** out_id);

/* Nearest candidate to z (length = pool dimension), excluding the given ids;
 * exclude may be NULL when n_exclude is 0. Returns ZOPO_ERR_EXHAUSTED when
 * every candidate is excluded. */
zopo_status zopo_pool_project(const zopo_pool* pool, const double* z,
                              size_t z_len, const char* const* exclude,
                              size_t n_exclude, const char** out_id);

/* The min(k, available) nearest candidates, ascending distance. out_ids must
 * have room for k pointers; *out_count receives the number written. */
zopo_status zopo_pool_nearest(const zopo_pool* pool, const double* z,
                              size_t z_len, size_t k,
                              const char* const* exclude, size_t n_exclude,
                              const char** out_ids, size_t* out_count);

/* ------------------------------------------------------------- objectives */

/* Score table from the pool records carrying a "score" field. */
zopo_status zopo_objective_table_from_pool(const zopo_pool* pool,
                                           double noise_sigma,
                                           zopo_objective** out);

/* Score table from a line-delimited JSON file {"id": str, "score": num}. */
zopo_status zopo_objective_table_load(const char* path, double noise_sigma,
                                      zopo_objective** out);

/* External evaluator over a subprocess: `command` is run through the shell;
 * it reads one JSON object per line on stdin {"id","text"} and answers one
 * per line {"id","score"} in request order. */
zopo_status zopo_objective_external_subprocess(const char* command,
                                               int timeout_ms, int retries,
                                               zopo_objective** out);

/* External evaluator over HTTP: POST {"id","text"} to the URL, expect
 * 200 with {"score": num}. A bearer token is taken from the
 * ZOPO_EVALUATOR_TOKEN environment variable when set (never logged). */
zopo_status zopo_objective_external_http(const char* url, int timeout_ms,
                                         int retries, zopo_objective** out);

void zopo_objective_free(zopo_objective* objective);

/* One evaluation (with the objective's observation noise). `seed` feeds the
 * noise draw; deterministic for noise-free objectives. */
zopo_status zopo_objective_evaluate(const zopo_objective* objective,
                                    const zopo_pool* pool, const char* id,
                                    uint64_t seed, double* out_score);

/* ------------------------------------------------------------------- runs */

/* Runs one optimization. config_json selects the method and its settings:
 *   {"method": "zopo|zopo-matern|zopo-noexplore|random|fd-zoo",
 *    "budget": 165, "init_queries": 40, "learning_rate": 0.01,
 *    "lambda": 0.1, "xi": 5, "n_local": 10, "seed": 0,
 *    "estimator": {"noise_sigma": 0.01, "fit_neighbors": 20, "jitter": num?},
 *    "kernel": {"kind": "ntk|matern52|rbf", ...}}
 * Missing fields take the defaults above. */
zopo_status zopo_optimize(const char* config_json, const zopo_pool* pool,
                          const zopo_objective* objective, zopo_trace** out);

void zopo_trace_free(zopo_trace* trace);

zopo_status zopo_trace_length(const zopo_trace* trace, size_t* out);
zopo_status zopo_trace_best(const zopo_trace* trace, const char** out_id,
                            double* out_score);
zopo_status zopo_trace_queries_used(const zopo_trace* trace, int* out);
zopo_status zopo_trace_truncated(const zopo_trace* trace, int* out);

/* Entry fields; out-params may be NULL. kind is one of "init",
 * "gradient-step", "exploration". uncertainty is NaN when not recorded. */
zopo_status zopo_trace_entry(const zopo_trace* trace, size_t index,
                             const char** out_id, double* out_score,
                             double* out_best_so_far, const char** out_kind,
                             double* out_uncertainty);

/* Serializes the full trace (entries plus resolved config) as JSON. */
zopo_status zopo_trace_write_json(const zopo_trace* trace, const char* path);

/* -------------------------------------------------------------- harness */

/* Runs a benchmark experiment described by a JSON config file and writes
 * results.csv, curves.csv, profile.csv, summary.json and traces/ under
 * out_dir. workers_override > 0 replaces the config's worker count. */
zopo_status zopo_bench_run(const char* config_path, const char* out_dir,
                           int workers_override);

/* Recomputes the performance profile from a results.csv written by
 * zopo_bench_run and writes profile.csv to out_path. */
zopo_status zopo_profile(const char* results_csv_path, const double* taus,
                         size_t n_taus, const char* out_path);

/* Kernel finite-difference checks and posterior oracles. Returns ZOPO_OK
 * when every check passes, ZOPO_ERR_RUN otherwise; prints one line per
 * check when verbose is nonzero. */
zopo_status zopo_selftest(int verbose);

#ifdef __cplusplus
}
#endif

#endif /* ZOPO_H */
