#ifndef RINGPAIR_H
#define RINGPAIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which correlation peak a model or fit refers to.
 */
typedef enum RpCorrelationKind {
  /**
   * Degenerate pairs split 50/50 onto two detectors.
   */
  RP_CORRELATION_KIND_SELF_DEGENERATE = 0,
  /**
   * Signal and idler on separate detectors.
   */
  RP_CORRELATION_KIND_CROSS_NONDEGENERATE = 1,
} RpCorrelationKind;

/**
 * Result code of every exported function.
 */
typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_NULL_POINTER = 1,
  RP_STATUS_PARAMETER_DOMAIN = 2,
  RP_STATUS_CONTRACT_VIOLATION = 3,
  RP_STATUS_DEGENERATE_INPUT = 4,
  RP_STATUS_INSUFFICIENT_STATISTICS = 5,
  RP_STATUS_NON_CONVERGENCE = 6,
  RP_STATUS_NO_CROSSING = 7,
  RP_STATUS_NUMERIC = 8,
  RP_STATUS_CONFIG = 9,
  RP_STATUS_IO = 10,
  RP_STATUS_INVALID_UTF8 = 11,
  RP_STATUS_BUFFER_TOO_SMALL = 12,
  RP_STATUS_PANIC = 13,
} RpStatus;

/**
 * Opaque coincidence histogram.
 */
typedef struct RpCorrelogram RpCorrelogram;

/**
 * Opaque time-tag stream (seconds, sorted).
 */
typedef struct RpStream RpStream;

/**
 * Fitted correlation peak. Times in seconds, rates and bandwidths in Hz.
 */
typedef struct RpG2Fit {
  double pair_rate;
  double pair_rate_error;
  double coherence_time;
  double coherence_time_error;
  double smearing;
  double bandwidth;
  double bandwidth_error;
  double reduced_chi2;
  uint64_t iterations;
} RpG2Fit;

/**
 * Heralded zero-delay autocorrelation with its coincidence counts.
 */
typedef struct RpHeraldedG2 {
  double value;
  uint64_t heralds;
  uint64_t with_a;
  uint64_t with_b;
  uint64_t with_both;
} RpHeraldedG2;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or an empty string.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *rp_last_error_message(void);

/**
 * Copies `len` tags (seconds, non-decreasing, within `[0, duration]`) into a new stream.
 *
 * # Safety
 * `tags` must point to `len` readable doubles (it may be null when `len` is 0);
 * `out` must be a valid pointer.
 */
enum RpStatus rp_stream_new(const double *tags,
                            uintptr_t len,
                            double duration,
                            struct RpStream **out);

/**
 * Number of tags in a stream (0 for a null handle).
 *
 * # Safety
 * `stream` must be null or a handle from [`rp_stream_new`].
 */
uintptr_t rp_stream_len(const struct RpStream *stream);

/**
 * Releases a stream. Null is ignored.
 *
 * # Safety
 * `stream` must be null or a handle from [`rp_stream_new`] not yet freed.
 */
void rp_stream_free(struct RpStream *stream);

/**
 * Histogram of `t_b - t_a` over `[-max_delay, max_delay]` with bins of `bin_width` seconds.
 *
 * # Safety
 * `a` and `b` must be valid stream handles and `out` a valid pointer.
 */
enum RpStatus rp_correlate(const struct RpStream *a,
                           const struct RpStream *b,
                           double bin_width,
                           double max_delay,
                           struct RpCorrelogram **out);

/**
 * Number of bins in a correlogram (0 for a null handle).
 *
 * # Safety
 * `c` must be null or a handle from [`rp_correlate`].
 */
uintptr_t rp_correlogram_len(const struct RpCorrelogram *c);

/**
 * Copies bin-centre delays (seconds) and counts into caller buffers of `capacity` entries.
 * Either output may be null to skip it.
 *
 * # Safety
 * `c` must be a valid handle; non-null outputs must hold `capacity` elements.
 */
enum RpStatus rp_correlogram_bins(const struct RpCorrelogram *c,
                                  double *delays,
                                  uint64_t *counts,
                                  uintptr_t capacity);

/**
 * Releases a correlogram. Null is ignored.
 *
 * # Safety
 * `c` must be null or a handle from [`rp_correlate`] not yet freed.
 */
void rp_correlogram_free(struct RpCorrelogram *c);

/**
 * Normalized `g2` and its Poisson errors, written into buffers of `capacity` entries
 * (`errors` may be null).
 *
 * # Safety
 * `c` must be a valid handle; `values` (and `errors` when non-null) must hold `capacity` doubles.
 */
enum RpStatus rp_g2_normalize(const struct RpCorrelogram *c,
                              double *values,
                              double *errors,
                              uintptr_t capacity);

/**
 * Model `g2(delay)` for pair rate (Hz), coherence time and smearing width (seconds).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RpStatus rp_g2_model(double delay,
                          double pair_rate,
                          double coherence_time,
                          double smearing,
                          enum RpCorrelationKind kind,
                          double *out);

/**
 * Smearing width from detector jitter and bin width (seconds).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RpStatus rp_tau_w(double jitter_sigma, double bin_width, double *out);

/**
 * Normalizes and fits a correlogram with the smearing implied by `jitter_sigma`.
 *
 * # Safety
 * `c` must be a valid handle and `out` a valid pointer.
 */
enum RpStatus rp_fit_g2(const struct RpCorrelogram *c,
                        enum RpCorrelationKind kind,
                        double jitter_sigma,
                        struct RpG2Fit *out);

/**
 * Heralded `g2(0)` within a coincidence window of `window` seconds (full width).
 *
 * # Safety
 * Stream arguments must be valid handles and `out` a valid pointer.
 */
enum RpStatus rp_heralded_g2(const struct RpStream *herald,
                             const struct RpStream *a,
                             const struct RpStream *b,
                             double window,
                             struct RpHeraldedG2 *out);

/**
 * Runs a scenario from its TOML text and returns the JSON summary as a new
 * string, to be released with [`rp_string_free`].
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out_json` a valid pointer.
 */
enum RpStatus rp_run_scenario(const char *config_toml, char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void rp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RINGPAIR_H */
