#ifndef ODDM_H
#define ODDM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ODDM_OK 0

/**
 * A required pointer argument was null.
 */
#define ODDM_ERR_NULL 1

/**
 * Bad parameter or configuration.
 */
#define ODDM_ERR_INVALID 2

/**
 * An array length does not match what the call needs.
 */
#define ODDM_ERR_LENGTH 3

/**
 * Output buffer too small; the needed size was written back.
 */
#define ODDM_ERR_BUFFER 4

/**
 * Numerical failure inside the library.
 */
#define ODDM_ERR_COMPUTE 5

/**
 * A Rust panic was caught at the boundary.
 */
#define ODDM_ERR_PANIC 6

#define ODDM_SCHEME_ODDM 0

#define ODDM_SCHEME_OTFS 1

/**
 * Set of on-grid paths `(h, l, k)`.
 */
typedef struct OddmChannel OddmChannel;

/**
 * Simulation grid and pulse parameters.
 */
typedef struct OddmConfig OddmConfig;

/**
 * Delay-Doppler input-output matrix: exact for ODDM, the classical
 * approximation for OTFS.
 */
typedef struct OddmMatrix OddmMatrix;

/**
 * ODDM (oversampled) or OTFS (symbol-rate) transmitter/receiver.
 */
typedef struct OddmModem OddmModem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *oddm_last_error(void);

void oddm_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *oddm_version(void);

int32_t oddm_config_new(size_t m,
                        size_t n,
                        double delta_f,
                        size_t q,
                        double rolloff,
                        size_t l,
                        size_t k,
                        size_t oversampling,
                        uint64_t seed,
                        struct OddmConfig **out);

/**
 * Parses the `key = value` configuration text.
 */
int32_t oddm_config_parse(const char *text, struct OddmConfig **out);

/**
 * Writes M·N (the frame length in symbols).
 */
int32_t oddm_config_frame_len(const struct OddmConfig *cfg, size_t *out);

void oddm_config_free(struct OddmConfig *cfg);

int32_t oddm_modem_new(const struct OddmConfig *cfg, int32_t scheme, struct OddmModem **out);

void oddm_modem_free(struct OddmModem *modem);

/**
 * Modulates a frame of `2·M·N` doubles. Writes up to `capacity` samples
 * (`2·capacity` doubles) to `samples`, and always writes the sample count,
 * rate in Hz and start time in seconds. Returns `ODDM_ERR_BUFFER` when the
 * buffer is too small, so a first call with `capacity = 0` sizes it.
 */
int32_t oddm_modulate(const struct OddmModem *modem,
                      const double *frame,
                      size_t frame_len,
                      double *samples,
                      size_t capacity,
                      size_t *out_len,
                      double *out_rate,
                      double *out_t0);

/**
 * Demodulates `len` samples on the grid `t0 + i/rate` into a frame of
 * `2·M·N` doubles.
 */
int32_t oddm_demodulate(const struct OddmModem *modem,
                        const double *samples,
                        size_t len,
                        double rate,
                        double t0,
                        double *frame,
                        size_t frame_len);

/**
 * Builds a channel from `count` paths: gains as interleaved doubles,
 * integer delay and Doppler bins.
 */
int32_t oddm_channel_new(const double *gains,
                         const uint32_t *delays,
                         const int32_t *dopplers,
                         size_t count,
                         struct OddmChannel **out);

/**
 * `paths` distinct random on-grid paths with unit total power, drawn from
 * `(seed, trial)`.
 */
int32_t oddm_channel_random(const struct OddmConfig *cfg,
                            size_t paths,
                            uint64_t seed,
                            uint64_t trial,
                            struct OddmChannel **out);

int32_t oddm_channel_len(const struct OddmChannel *channel, size_t *out);

void oddm_channel_free(struct OddmChannel *channel);

/**
 * Passes a waveform through the channel. Same sizing protocol as
 * [`oddm_modulate`]; the output keeps `rate` and `t0`.
 */
int32_t oddm_channel_apply(const struct OddmChannel *channel,
                           const struct OddmConfig *cfg,
                           const double *samples,
                           size_t len,
                           double rate,
                           double t0,
                           double *out,
                           size_t capacity,
                           size_t *out_len);

int32_t oddm_matrix_new(const struct OddmChannel *channel,
                        const struct OddmConfig *cfg,
                        int32_t scheme,
                        struct OddmMatrix **out);

void oddm_matrix_free(struct OddmMatrix *matrix);

/**
 * `y = H·x`, both `2·M·N` doubles.
 */
int32_t oddm_matrix_apply(const struct OddmMatrix *matrix, const double *x, double *y, size_t len);

/**
 * 4-QAM message-passing detection with default iteration settings.
 * Writes one symbol index (0..3) per DD bin to `decisions` and, when not
 * null, the iteration count.
 */
int32_t oddm_mp_detect(const struct OddmMatrix *matrix,
                       const double *y,
                       size_t len,
                       double noise_var,
                       uint32_t *decisions,
                       size_t *iterations);

/**
 * 4-QAM constellation point of `index` as `re, im`.
 */
int32_t oddm_qam4_point(uint32_t index, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ODDM_H */
