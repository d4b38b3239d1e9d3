#ifndef MATRIX_SE_H
#define MATRIX_SE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every call.
typedef enum MseStatus {
  MSE_STATUS_OK = 0,
  MSE_STATUS_NULL_POINTER = 1,
  MSE_STATUS_INVALID_ARGUMENT = 2,
  MSE_STATUS_IO = 3,
  MSE_STATUS_FORMAT = 4,
  MSE_STATUS_NUMERIC = 5,
  MSE_STATUS_BUFFER_TOO_SMALL = 6,
  MSE_STATUS_PANIC = 7,
} MseStatus;

// Opaque model handle: parameters plus the configuration they were built with.
typedef struct MseModel MseModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *mse_last_error(void);

// Library version as a static NUL-terminated string.
const char *mse_version(void);

// Creates a freshly initialised model for `task` with `maps` feature maps
// and `blocks` Beneš blocks.
//
// # Safety
// `task` must be a NUL-terminated string and `out` a valid pointer.
enum MseStatus mse_model_new(const char *task,
                             size_t maps,
                             size_t blocks,
                             uint64_t seed,
                             struct MseModel **out);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MseStatus mse_model_load(const char *path, struct MseModel **out);

// Writes the model as a checkpoint file.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
enum MseStatus mse_model_save(const struct MseModel *model, const char *path);

// Number of learnable scalars.
//
// # Safety
// `model` must come from this library and `out` be a valid pointer.
enum MseStatus mse_model_param_count(const struct MseModel *model, size_t *out);

// Input and output vocabulary sizes of the model.
//
// # Safety
// `model` must come from this library; both outputs must be valid pointers.
enum MseStatus mse_model_vocab(const struct MseModel *model, size_t *vocab_in, size_t *vocab_out);

// Predicts the output symbol of every cell for `batch` grids of
// `side` x `side` cells laid out row-major one after another. `side` must
// be a power of two; `cells` and `out` hold `batch * side * side` entries.
//
// # Safety
// `model` must come from this library; the buffers must be valid for the
// stated lengths.
enum MseStatus mse_model_predict(const struct MseModel *model,
                                 size_t side,
                                 size_t batch,
                                 const uint32_t *cells,
                                 uint32_t *out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void mse_model_free(struct MseModel *model);

// Grid side used for a task instance of size `n` (the next power of two).
//
// # Safety
// `task` must be NUL-terminated and `side` a valid pointer.
enum MseStatus mse_task_side(const char *task, size_t n, size_t *side);

// Generates one instance. Each buffer holds `capacity` entries, which must
// be at least `side * side` as reported by [`mse_task_side`].
//
// # Safety
// `task` must be NUL-terminated; buffers must be valid for `capacity`.
enum MseStatus mse_task_generate(const char *task,
                                 size_t n,
                                 uint64_t seed,
                                 size_t capacity,
                                 uint32_t *input,
                                 uint32_t *target,
                                 uint8_t *mask);

// Checks a completed 9x9 board (row-major digits 1..9). Writes 1 to
// `valid` when every row, column and box holds each digit once.
//
// # Safety
// `cells` must hold 81 bytes and `valid` be a valid pointer.
enum MseStatus mse_sudoku_is_valid(const uint8_t *cells, int32_t *valid);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MATRIX_SE_H */
