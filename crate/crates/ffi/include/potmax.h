#ifndef POTMAX_H
#define POTMAX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum PotmaxStatus {
  POTMAX_STATUS_OK = 0,
  POTMAX_STATUS_NULL_POINTER = 1,
  POTMAX_STATUS_INVALID_UTF8 = 2,
  POTMAX_STATUS_INVALID_CONFIG = 3,
  POTMAX_STATUS_DOMAIN = 4,
  POTMAX_STATUS_UNSUPPORTED = 5,
  POTMAX_STATUS_NUMERICAL = 6,
  POTMAX_STATUS_IO = 7,
  POTMAX_STATUS_PANIC = 8,
} PotmaxStatus;

// Exit-kernel form for [`potmax_exit_kernel_center`].
typedef enum PotmaxExitVariant {
  POTMAX_EXIT_VARIANT_NORMALIZED = 0,
  POTMAX_EXIT_VARIANT_AS_PRINTED = 1,
} PotmaxExitVariant;

// Parsed and validated experiment configuration.
typedef struct PotmaxConfig PotmaxConfig;

// Completed run.
typedef struct PotmaxReport PotmaxReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *potmax_last_error_message(void);

// Library version as a static string.
const char *potmax_version(void);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void potmax_string_free(char *s);

// Parse and validate a TOML config. On failure every violation is in the error message.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum PotmaxStatus potmax_config_parse(const char *toml, struct PotmaxConfig **out);

// # Safety
// `cfg` must come from [`potmax_config_parse`] and not have been freed. NULL is ignored.
void potmax_config_free(struct PotmaxConfig *cfg);

// Override the master seed.
//
// # Safety
// `cfg` must be a live handle.
enum PotmaxStatus potmax_config_set_seed(struct PotmaxConfig *cfg, uint64_t seed);

// SHA-256 of the canonical config as a hex string.
//
// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum PotmaxStatus potmax_config_hash(const struct PotmaxConfig *cfg, char **out);

// Validate a TOML config without keeping it. Returns `InvalidConfig` with the
// violations in the error message.
//
// # Safety
// `toml` must be a NUL-terminated string.
enum PotmaxStatus potmax_config_validate(const char *toml);

// Run an experiment with `workers` threads (0 = environment default).
//
// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum PotmaxStatus potmax_run(const struct PotmaxConfig *cfg,
                             uint32_t workers,
                             struct PotmaxReport **out);

// # Safety
// `report` must come from [`potmax_run`] and not have been freed. NULL is ignored.
void potmax_report_free(struct PotmaxReport *report);

// 0 on completion, 2 on an undecided verdict, -1 for a NULL handle.
//
// # Safety
// `report` must be a live handle or NULL.
int32_t potmax_report_exit_code(const struct PotmaxReport *report);

// The report as JSON.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum PotmaxStatus potmax_report_json(const struct PotmaxReport *report, char **out);

// Write `report.json` and the CSV files into `dir`.
//
// # Safety
// `report` must be a live handle; `dir` a NUL-terminated path.
enum PotmaxStatus potmax_report_write(const struct PotmaxReport *report, const char *dir);

// Plot data CSV for `what` (fine-limit, classify, capacity, fk, resolvent, revuz, exit-kernel).
//
// # Safety
// `report` must be a live handle; `what` a NUL-terminated string; `out` writable.
enum PotmaxStatus potmax_report_plotdata(const struct PotmaxReport *report,
                                         const char *what,
                                         char **out);

// The candidate catalog as a JSON array.
//
// # Safety
// `out` must be writable.
enum PotmaxStatus potmax_catalog_json(char **out);

// Green function of `Δ` on `B(0, r) ⊂ ℝ^d` at `(x, y)`.
//
// # Safety
// `x` and `y` must point to `d` doubles; `out` must be writable.
enum PotmaxStatus potmax_green_ball_brownian(size_t d,
                                             double r,
                                             const double *x,
                                             const double *y,
                                             double *out);

// Expected exit time from `B(0, r)` started at `x`.
//
// # Safety
// `x` must point to `d` doubles; `out` must be writable.
enum PotmaxStatus potmax_expected_residence(size_t d, double r, const double *x, double *out);

// Exit-kernel density for the stable walk started at the center of `B(0, r)`.
//
// # Safety
// `y` must point to `d` doubles; `out` must be writable.
enum PotmaxStatus potmax_exit_kernel_center(size_t d,
                                            double alpha,
                                            double r,
                                            const double *y,
                                            enum PotmaxExitVariant variant,
                                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POTMAX_H */
