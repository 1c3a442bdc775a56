/* C interface to the ranopt solver library.
 *
 * Usage: create a context, load or set key=value configuration, run the
 * experiment named by the "chapter" key (ch3, ch4 or ch8), then read metrics
 * or the written CSV files. All functions return a status code; on failure
 * ranopt_last_error describes what went wrong.
 */
#ifndef RANOPT_H
#define RANOPT_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct ranopt_ctx ranopt_ctx;

typedef enum ranopt_status {
  RANOPT_OK = 0,
  RANOPT_INVALID_ARGUMENT = 1, /* bad config value, key or parameter */
  RANOPT_IO_ERROR = 2,         /* file could not be read or written */
  RANOPT_SOLVER_ERROR = 3,     /* numerical failure inside a solver */
  RANOPT_BAD_HANDLE = 4        /* null or destroyed context */
} ranopt_status;

/* Returns a fresh context or null on allocation failure. */
ranopt_ctx* ranopt_create(void);

/* Frees the context; null is ignored. */
void ranopt_destroy(ranopt_ctx* ctx);

/* Message for the most recent failure on this context, empty after a
 * successful call. Owned by the context; valid until its next call. */
const char* ranopt_last_error(const ranopt_ctx* ctx);

/* Replaces the context's configuration with the parsed key=value file. */
ranopt_status ranopt_load_config_file(ranopt_ctx* ctx, const char* path);

/* Sets or overrides a single configuration key. */
ranopt_status ranopt_set(ranopt_ctx* ctx, const char* key, const char* value);

/* Runs the experiment selected by the "chapter" config key. Writes the
 * results table to out_csv and the iteration trace to trace_csv; either path
 * may be null to skip that file. Metrics stay readable until the next run. */
ranopt_status ranopt_run(ranopt_ctx* ctx, const char* out_csv,
                         const char* trace_csv);

/* Number of metrics produced by the last successful run. */
ranopt_status ranopt_metric_count(ranopt_ctx* ctx, size_t* count);

/* Name of the index-th metric; the pointer stays valid until the next run
 * on this context. */
ranopt_status ranopt_metric_name(ranopt_ctx* ctx, size_t index,
                                 const char** name);

/* Value of the named metric from the last successful run. */
ranopt_status ranopt_metric(ranopt_ctx* ctx, const char* name, double* value);

/* Runs the sweep described by the spec file (a config document with sweep
 * keys) and writes report.csv into out_dir, creating it if needed. */
ranopt_status ranopt_run_sweep(ranopt_ctx* ctx, const char* spec_path,
                               const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
