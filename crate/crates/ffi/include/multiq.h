#ifndef MULTIQ_H
#define MULTIQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every function.
typedef enum MqStatus {
  MQ_STATUS_OK = 0,
  MQ_STATUS_NULL_POINTER = 1,
  MQ_STATUS_INVALID_ARGUMENT = 2,
  MQ_STATUS_DIMENSION = 3,
  MQ_STATUS_NOT_POSITIVE_DEFINITE = 4,
  MQ_STATUS_DIVERGED = 5,
  MQ_STATUS_IO = 6,
  MQ_STATUS_FORMAT = 7,
  MQ_STATUS_PANIC = 8,
} MqStatus;

// Opaque weighted ensemble of models.
typedef struct MqEnsemble MqEnsemble;

// Opaque pre-trained Q-function.
typedef struct MqModel MqModel;

// Opaque pendulum plant at a fixed parameter, with the benchmark reward.
typedef struct MqPlant MqPlant;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message (NUL-terminated, truncated
// to fit) into `buf` and returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `cap` writable bytes.
size_t mq_last_error_message(char *buf, size_t cap);

// Loads a model file written by the `pretrain` command.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum MqStatus mq_model_load(const char *path, struct MqModel **out);

// # Safety
// `m` must be null or a handle from `mq_model_load` not yet freed.
void mq_model_free(struct MqModel *m);

// # Safety
// `m` must be a live handle.
size_t mq_model_state_dim(const struct MqModel *m);

// # Safety
// `m` must be a live handle.
size_t mq_model_action_dim(const struct MqModel *m);

// Evaluates the head at `x`: writes V(x), μ(x) (`action_len` entries) and
// P(x) row-major (`p_len` = action_dim² entries).
//
// # Safety
// All pointers must be valid for their stated lengths.
enum MqStatus mq_model_eval(const struct MqModel *m,
                            const double *x,
                            size_t x_len,
                            double *value,
                            double *mu,
                            size_t action_len,
                            double *p,
                            size_t p_len);

// Q(x, a) of a single model.
//
// # Safety
// All pointers must be valid for their stated lengths.
enum MqStatus mq_model_q(const struct MqModel *m,
                         const double *x,
                         size_t x_len,
                         const double *a,
                         size_t a_len,
                         double *q);

// Pendulum at parameter (xi1, xi2) with action box [-1, 1] and the
// benchmark quadratic reward.
//
// # Safety
// `out` must be writable.
enum MqStatus mq_plant_pendulum_new(double xi1, double xi2, struct MqPlant **out);

// # Safety
// `p` must be null or a live plant handle.
void mq_plant_free(struct MqPlant *p);

// One plant step. Actions outside the box are clipped first; the reward is
// evaluated on the clipped action and written to `reward` if non-null.
//
// # Safety
// All pointers must be valid for their stated lengths.
enum MqStatus mq_plant_step(const struct MqPlant *p,
                            const double *x,
                            size_t x_len,
                            const double *a,
                            size_t a_len,
                            double *x_next,
                            size_t x_next_len,
                            double *reward);

// Builds an ensemble from model files with uniform weights and the default
// online step sizes.
//
// # Safety
// `paths` must point to `n` NUL-terminated strings; `out` must be writable.
enum MqStatus mq_ensemble_load(const char *const *paths, size_t n, struct MqEnsemble **out);

// # Safety
// `e` must be null or a live ensemble handle.
void mq_ensemble_free(struct MqEnsemble *e);

// # Safety
// `e` must be a live handle.
size_t mq_ensemble_len(const struct MqEnsemble *e);

// Maximizer of the weighted ensemble Q at `x`.
//
// # Safety
// All pointers must be valid for their stated lengths.
enum MqStatus mq_ensemble_greedy(const struct MqEnsemble *e,
                                 const double *x,
                                 size_t x_len,
                                 double *a,
                                 size_t a_len);

// One online weight update from the transition (x, a, r, x'). Writes the
// TD error to `delta` if non-null; `skipped` (if non-null) is set to 1
// when no positive step was found and the weights were left unchanged.
//
// # Safety
// All pointers must be valid for their stated lengths.
enum MqStatus mq_ensemble_update(struct MqEnsemble *e,
                                 const double *x,
                                 size_t x_len,
                                 const double *a,
                                 size_t a_len,
                                 double r,
                                 const double *x_next,
                                 size_t x_next_len,
                                 double *delta,
                                 int32_t *skipped);

// Copies the current weights (`len` must equal the member count).
//
// # Safety
// `w` must be valid for `len` writes.
enum MqStatus mq_ensemble_weights(const struct MqEnsemble *e, double *w, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIQ_H */
