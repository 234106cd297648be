/* C interface for the hankel-dmd library. All matrices are row-major. */

#ifndef HANKEL_DMD_H
#define HANKEL_DMD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Call outcome. Nonzero values group failures the same way the CLI's exit
// codes do, with FFI-specific conditions above them.
typedef enum HdmdStatus {
  HDMD_STATUS_OK = 0,
  // Invalid parameter or configuration.
  HDMD_STATUS_USAGE = 2,
  // Malformed or inconsistent input data.
  HDMD_STATUS_DATA = 3,
  // Numerical failure while fitting or solving.
  HDMD_STATUS_NUMERICAL = 4,
  // A required pointer argument was null.
  HDMD_STATUS_NULL_ARGUMENT = 5,
  // Internal invariant violation caught at the boundary.
  HDMD_STATUS_PANIC = 6,
} HdmdStatus;

// Opaque fitted-model handle.
typedef struct HdmdModel HdmdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the most recent error message for the calling thread into `buf`
// (NUL-terminated, truncated to `cap`) and returns the full message length
// in bytes, excluding the terminator. `buf` may be null to query the length.
size_t hdmd_last_error(char *buf, size_t cap);

// Library version as a static NUL-terminated string.
const char *hdmd_version(void);

// Fits a Koopman model to channel-major data (`p` sensors by `n` samples,
// row-major) sampled every `dt` seconds.
//
// The data is bandpass filtered (Butterworth order `filter_order`, passband
// `low_hz..high_hz`, zero-phase; order 0 disables filtering), z-scored per
// channel, delay-embedded `delay_count` deep, and truncated to `rank`
// singular directions. `exact_modes` selects exact instead of projected
// mode shapes. On success `*out` owns the new handle.
enum HdmdStatus hdmd_identify(const double *data,
                              size_t p,
                              size_t n,
                              double dt,
                              size_t delay_count,
                              size_t rank,
                              size_t filter_order,
                              double low_hz,
                              double high_hz,
                              bool exact_modes,
                              struct HdmdModel **out);

// Loads a model container written by `hdmd_model_save` or the CLI.
enum HdmdStatus hdmd_model_load(const char *path, struct HdmdModel **out);

// Writes the model container to `path` (JSON, deterministic bytes).
enum HdmdStatus hdmd_model_save(const struct HdmdModel *model, const char *path);

// Releases a model handle. Null is a no-op.
void hdmd_model_free(struct HdmdModel *model);

// Number of retained modes, or 0 for a null handle.
size_t hdmd_model_rank(const struct HdmdModel *model);

// Number of physical sensors, or 0 for a null handle.
size_t hdmd_model_sensor_count(const struct HdmdModel *model);

// Delay-embedding depth, or 0 for a null handle.
size_t hdmd_model_delay_count(const struct HdmdModel *model);

// Sample interval in seconds, or 0 for a null handle.
double hdmd_model_dt(const struct HdmdModel *model);

// Copies the continuous-time eigenvalues into `out_re`/`out_im` (each of
// capacity `cap`; either may be null to skip) and returns the mode count.
size_t hdmd_model_eigenvalues(const struct HdmdModel *model,
                              double *out_re,
                              double *out_im,
                              size_t cap);

// Copies mode `j`'s physical-sensor shape (complex, `p` entries) into
// `out_re`/`out_im` of capacity `cap` and returns `p`; returns 0 when the
// handle is null or `j` is out of range.
size_t hdmd_model_mode_shape(const struct HdmdModel *model,
                             size_t j,
                             double *out_re,
                             double *out_im,
                             size_t cap);

// Rolling reconstruction through the model: data is filtered and normalized
// with the model's stored parameters, the sensors listed in `hidden` (of
// length `n_hidden`; null for none) are withheld, non-growing modes with at
// least `stability_floor` energy share are retained, and every channel is
// re-predicted in windows of `horizon_w` samples from `calibration_len`
// samples of visible history.
//
// `y_hat` receives the `p` x `n` prediction (row-major, normalized domain);
// `r2`/`nrmse` (each length `p`, may be null) receive per-channel scores.
enum HdmdStatus hdmd_reconstruct(const struct HdmdModel *model,
                                 const double *data,
                                 size_t p,
                                 size_t n,
                                 const size_t *hidden,
                                 size_t n_hidden,
                                 size_t horizon_w,
                                 size_t calibration_len,
                                 double stability_floor,
                                 double *y_hat,
                                 double *r2,
                                 double *nrmse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HANKEL_DMD_H */
