/* C interface of sica-noc: stochastic SICA epidemic control. */

#ifndef SICA_NOC_H
#define SICA_NOC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status of an FFI call. `OK` is zero; every other value signals a failure
// whose message is available from `sica_last_error_message`.
typedef enum SicaStatus {
  // The call succeeded.
  SICA_STATUS_OK = 0,
  // A required pointer argument was null.
  SICA_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SICA_STATUS_INVALID_UTF8 = 2,
  // The scenario or an argument value is invalid.
  SICA_STATUS_INVALID_CONFIG = 3,
  // Simulation or optimization failed at runtime.
  SICA_STATUS_RUNTIME_FAILURE = 4,
  // The provided buffer is smaller than the required length.
  SICA_STATUS_BUFFER_TOO_SMALL = 5,
} SicaStatus;

// Opaque optimization result handle.
typedef struct SicaOptimizeResult SicaOptimizeResult;

// Opaque scenario handle.
typedef struct SicaScenario SicaScenario;

// Flat summary of an ensemble simulation under the scenario's initial
// control.
typedef struct SicaSimulationSummary {
  // Monte-Carlo mean of the cost functional.
  double cost_mean;
  // Standard error of that mean.
  double cost_stderr;
  // Lower bound of the invariant population region.
  double omega_low;
  // Upper bound of the invariant population region.
  double omega_high;
  // Fraction of grid nodes outside the region (with the scenario's
  // containment slack).
  double violation_fraction;
  // Number of negativity clamps applied during integration.
  uint64_t clamp_events;
  // Number of simulated paths.
  uint64_t n_paths;
} SicaSimulationSummary;

// Flat summary of an optimization run.
typedef struct SicaOptimizeReport {
  // Final cost mean of the winning start.
  double cost_mean;
  // Standard error of that mean.
  double cost_stderr;
  // Smallest final cost across all starts (the value estimate).
  double value_estimate;
  // Iterations performed by the winning start.
  uint64_t iterations;
  // Whether the winning start met its stopping tolerance.
  bool converged;
  // Maximality-condition residual of the returned control.
  double residual;
  // Number of control cells (length of the control buffer).
  uint64_t n_cells;
} SicaOptimizeReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, as a NUL-terminated
// UTF-8 string. Never null; empty before the first failure. The pointer is
// invalidated by the next failing call on the same thread.
const char *sica_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sica_version(void);

// Parses a scenario from TOML text.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out` a valid pointer.
// On success `*out` owns a scenario that must be released with
// [`sica_scenario_free`].
enum SicaStatus sica_scenario_from_toml(const char *text, struct SicaScenario **out);

// Reads and parses a scenario file.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
// On success `*out` owns a scenario that must be released with
// [`sica_scenario_free`].
enum SicaStatus sica_scenario_from_file(const char *path, struct SicaScenario **out);

// Creates the built-in demo scenario.
//
// # Safety
// `out` must be a valid pointer. On success `*out` owns a scenario that
// must be released with [`sica_scenario_free`].
enum SicaStatus sica_scenario_demo(struct SicaScenario **out);

// Releases a scenario handle. Passing null is a no-op.
//
// # Safety
// `scenario` must be null or a pointer obtained from a scenario
// constructor that has not been freed yet.
void sica_scenario_free(struct SicaScenario *scenario);

// Replaces the scenario's base seed (all derived randomness follows it).
//
// # Safety
// `scenario` must be a valid scenario handle.
enum SicaStatus sica_scenario_set_seed(struct SicaScenario *scenario, uint64_t seed);

// Replaces the scenario's realization exponent; `k` must lie in `[0, 1]`
// and be realizable for every interval parameter.
//
// # Safety
// `scenario` must be a valid scenario handle.
enum SicaStatus sica_scenario_set_realization(struct SicaScenario *scenario, double k);

// Number of control cells of the scenario's time grid.
//
// # Safety
// `scenario` and `out` must be valid pointers.
enum SicaStatus sica_scenario_n_cells(const struct SicaScenario *scenario, uintptr_t *out);

// Log-linear interval realization `lower^(1-k) * upper^k`, with exact
// endpoints at `k` in {0, 1} and exact degenerate intervals.
//
// # Safety
// `out` must be a valid pointer.
enum SicaStatus sica_realize_interval(double lower, double upper, double k, double *out);

// Simulates an ensemble under the scenario's initial control and fills a
// flat summary.
//
// # Safety
// `scenario` and `out` must be valid pointers.
enum SicaStatus sica_simulate(const struct SicaScenario *scenario,
                              struct SicaSimulationSummary *out);

// Runs the control optimization for a scenario and returns an owned result
// handle that can be queried for the report and the control values.
//
// # Safety
// `scenario` and `out` must be valid pointers. On success `*out` owns a
// result that must be released with [`sica_result_free`].
enum SicaStatus sica_optimize(const struct SicaScenario *scenario, struct SicaOptimizeResult **out);

// Copies the flat optimization report out of a result handle.
//
// # Safety
// `result` and `out` must be valid pointers.
enum SicaStatus sica_result_report(const struct SicaOptimizeResult *result,
                                   struct SicaOptimizeReport *out);

// Copies the optimized per-cell control values into `buffer`.
//
// Pass a null `buffer` to query the required length through `written`.
// With a non-null buffer of insufficient `capacity` the call fails with
// `BUFFER_TOO_SMALL` and still reports the required length.
//
// # Safety
// `result` and `written` must be valid pointers; a non-null `buffer` must
// point to at least `capacity` writable doubles.
enum SicaStatus sica_result_control(const struct SicaOptimizeResult *result,
                                    double *buffer,
                                    uintptr_t capacity,
                                    uintptr_t *written);

// Releases an optimization result handle. Passing null is a no-op.
//
// # Safety
// `result` must be null or a pointer obtained from [`sica_optimize`] that
// has not been freed yet.
void sica_result_free(struct SicaOptimizeResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SICA_NOC_H */
