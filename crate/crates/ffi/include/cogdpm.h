#ifndef COGDPM_H
#define COGDPM_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CogStatus {
  COG_STATUS_OK = 0,
  COG_STATUS_NULL_POINTER = 1,
  COG_STATUS_INVALID_ARGUMENT = 2,
  COG_STATUS_SHAPE_MISMATCH = 3,
  COG_STATUS_DEGENERATE_STEP = 4,
  COG_STATUS_DIVERGED = 5,
  COG_STATUS_IO = 6,
  COG_STATUS_FORMAT = 7,
  COG_STATUS_PANIC = 8,
} CogStatus;

typedef enum CogGuidance {
  /**
   * Precision-weighted field guidance.
   */
  COG_GUIDANCE_PRECISION = 0,
  /**
   * Constant classifier-free guidance with `guidance_scale`.
   */
  COG_GUIDANCE_CONSTANT = 1,
} CogGuidance;

/**
 * Opaque denoiser.
 */
typedef struct CogDenoiser CogDenoiser;

/**
 * Opaque noise schedule.
 */
typedef struct CogSchedule CogSchedule;

typedef struct CogSamplerConfig {
  double lambda;
  size_t queue_capacity;
  /**
   * Newest queue entries used for the variance; 0 uses the whole queue.
   */
  size_t window_k;
  /**
   * Reverse steps to run; 0 runs the whole schedule.
   */
  size_t t_infer;
  bool stochastic_step;
  double clip_lo;
  double clip_hi;
  uint64_t seed;
  enum CogGuidance guidance;
  double guidance_scale;
} CogSamplerConfig;

typedef struct CogContingency {
  uint64_t hits;
  uint64_t misses;
  uint64_t false_alarms;
  uint64_t correct_rejections;
} CogContingency;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *cog_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cog_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CogStatus cog_schedule_cosine(size_t steps, double s_offset, struct CogSchedule **out);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CogStatus cog_schedule_linear(size_t steps,
                                   double beta_start,
                                   double beta_end,
                                   struct CogSchedule **out);

/**
 * Number of diffusion steps, or 0 for a null handle.
 *
 * # Safety
 * `schedule` must be null or a live handle.
 */
size_t cog_schedule_len(const struct CogSchedule *schedule);

/**
 * Copies the ᾱ table into `out`, which must hold `cog_schedule_len` values.
 *
 * # Safety
 * `schedule` must be a live handle and `out` must point to `len` writable doubles.
 */
enum CogStatus cog_schedule_alpha_bars(const struct CogSchedule *schedule, double *out, size_t len);

/**
 * # Safety
 * `schedule` must be null or a handle not freed before.
 */
void cog_schedule_free(struct CogSchedule *schedule);

/**
 * Analytic Gaussian denoiser. With `persistence` the prior mean repeats the
 * last context frame; otherwise it is `global_mean`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CogStatus cog_denoiser_oracle(double prior_var,
                                   double global_mean,
                                   bool persistence,
                                   struct CogDenoiser **out);

/**
 * Loads a trained network and the schedule stored with it.
 *
 * # Safety
 * `path` must be a NUL-terminated string; both out pointers must be writable.
 */
enum CogStatus cog_denoiser_load(const char *path,
                                 struct CogDenoiser **out_denoiser,
                                 struct CogSchedule **out_schedule);

/**
 * # Safety
 * `denoiser` must be null or a handle not freed before.
 */
void cog_denoiser_free(struct CogDenoiser *denoiser);

/**
 * Library defaults: λ = 2, queue 4, whole schedule, deterministic steps,
 * clip `[0, 1]`, precision guidance.
 */
struct CogSamplerConfig cog_sampler_config_default(void);

/**
 * Samples one forecast of `horizon` frames conditioned on `context`.
 *
 * `out` receives `horizon * channels * height * width` doubles and must be
 * exactly that long (`out_len`). When `out_weights` is not null it receives
 * the final-step guidance weights with the same layout.
 *
 * # Safety
 * All handles must be live; `context` must hold the product of
 * `context_shape` doubles; `out` and `out_weights` must hold `out_len`.
 */
enum CogStatus cog_sample(const struct CogDenoiser *denoiser,
                          const struct CogSchedule *schedule,
                          const struct CogSamplerConfig *config,
                          const double *context,
                          const size_t *context_shape,
                          size_t horizon,
                          double *out,
                          double *out_weights,
                          size_t out_len);

/**
 * Mean ensemble CRPS. `members` holds `member_count` consecutive fields of
 * `shape`; `fair` selects the `M(M−1)` spread normalization.
 *
 * # Safety
 * `members` must hold `member_count` fields and `truth` one field of `shape`.
 */
enum CogStatus cog_crps(const double *members,
                        size_t member_count,
                        const double *truth,
                        const size_t *shape,
                        bool fair,
                        double *out);

/**
 * Neighborhood CSI of one forecast against one truth; `window` 1 gives
 * plain CSI. `out_table` may be null.
 *
 * # Safety
 * `forecast` and `truth` must each hold one field of `shape`.
 */
enum CogStatus cog_csi(const double *forecast,
                       const double *truth,
                       const size_t *shape,
                       double threshold,
                       size_t window,
                       double *out_score,
                       struct CogContingency *out_table);

/**
 * Fractions skill score with an odd `window`.
 *
 * # Safety
 * `forecast` and `truth` must each hold one field of `shape`.
 */
enum CogStatus cog_fss(const double *forecast,
                       const double *truth,
                       const size_t *shape,
                       double threshold,
                       size_t window,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COGDPM_H */
