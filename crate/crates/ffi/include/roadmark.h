#ifndef ROADMARK_H
#define ROADMARK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_POINTER = 1,
  RM_STATUS_INVALID_ARGUMENT = 2,
  // The experiment is misconfigured.
  RM_STATUS_CONFIG_ERROR = 3,
  // Simulation, search or file output failed.
  RM_STATUS_RUNTIME_ERROR = 4,
  // The caller's buffer is too small; the needed size was written.
  RM_STATUS_BUFFER_TOO_SMALL = 5,
  RM_STATUS_PANIC = 6,
} RmStatus;

// Worst infraction of an episode.
typedef enum RmSeverity {
  RM_SEVERITY_SAFE = 0,
  RM_SEVERITY_OPPOSITE_LANE = 1,
  RM_SEVERITY_OFFROAD = 2,
  RM_SEVERITY_COLLISION = 3,
} RmSeverity;

// An experiment configuration.
typedef struct RmExperiment RmExperiment;

// One simulated episode.
typedef struct RmTrace RmTrace;

// Summary of a finished search.
typedef struct RmSummary {
  size_t evaluated;
  size_t failed;
  // Iterations read back from an earlier run.
  size_t resumed;
  size_t simulated;
  // -1 when no iteration was scored.
  int64_t best_iteration;
  // NaN when no iteration was scored.
  double best_score;
  // -1 when no iteration was scored.
  int worst_severity;
  size_t hijack_successes;
} RmSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rm_version(void);

// Copy the calling thread's last error message into `buf` (NUL-terminated).
// `needed` receives the size including the terminator.
//
// # Safety
// `buf` must hold `cap` bytes; `needed` may be null.
enum RmStatus rm_last_error(char *buf, size_t cap, size_t *needed);

// Create an experiment from a JSON config; null selects the defaults.
//
// # Safety
// `config_json` is null or a NUL-terminated string; `out` must be writable.
enum RmStatus rm_experiment_new(const char *config_json, struct RmExperiment **out);

// # Safety
// `exp` is null or a handle from [`rm_experiment_new`] not yet freed.
void rm_experiment_free(struct RmExperiment *exp);

// Set the output root for cached runs and result files.
//
// # Safety
// `exp` is a live handle and `path` a NUL-terminated string.
enum RmStatus rm_experiment_set_out(struct RmExperiment *exp, const char *path);

// Number of pattern parameters of the configured family.
//
// # Safety
// `exp` is a live handle and `out` writable.
enum RmStatus rm_experiment_dimension(const struct RmExperiment *exp, size_t *out);

// Lower and upper parameter bounds, `dimension` values each.
//
// # Safety
// `lower` and `upper` hold `cap` doubles; `len` is writable.
enum RmStatus rm_experiment_bounds(const struct RmExperiment *exp,
                                   double *lower,
                                   double *upper,
                                   size_t cap,
                                   size_t *len);

// Record (or load from the cache) the attack-free run.
//
// # Safety
// `exp` is a live handle and `out` writable.
enum RmStatus rm_experiment_baseline(const struct RmExperiment *exp, struct RmTrace **out);

// Simulate one attacked episode with the given pattern parameters.
// `score` receives the objective value and may be null.
//
// # Safety
// `params` holds `n` doubles; `out` is writable.
enum RmStatus rm_experiment_episode(const struct RmExperiment *exp,
                                    const double *params,
                                    size_t n,
                                    struct RmTrace **out,
                                    double *score);

// Run the configured search, writing `<out>/runs/<name>/results.jsonl`.
// A non-zero `resume` continues an earlier run of the same experiment.
//
// # Safety
// `exp` is a live handle and `summary` writable.
enum RmStatus rm_experiment_search(const struct RmExperiment *exp,
                                   int resume,
                                   struct RmSummary *summary);

// # Safety
// `trace` is null or a handle not yet freed.
void rm_trace_free(struct RmTrace *trace);

// Number of frames.
//
// # Safety
// `trace` is a live handle.
size_t rm_trace_len(const struct RmTrace *trace);

// # Safety
// `trace` is a live handle and `out` writable.
enum RmStatus rm_trace_severity(const struct RmTrace *trace, enum RmSeverity *out);

// First frame with the canvas in view and the number of such frames.
//
// # Safety
// `trace` is a live handle; `first` and `count` are writable.
enum RmStatus rm_trace_visibility(const struct RmTrace *trace, size_t *first, size_t *count);

// Per-frame steering commands.
//
// # Safety
// `buf` holds `cap` doubles; `len` is writable.
enum RmStatus rm_trace_steering(const struct RmTrace *trace, double *buf, size_t cap, size_t *len);

// Per-frame positions as interleaved x, y pairs (`2 * len` values).
//
// # Safety
// `buf` holds `cap` doubles; `len` is writable.
enum RmStatus rm_trace_positions(const struct RmTrace *trace, double *buf, size_t cap, size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROADMARK_H */
