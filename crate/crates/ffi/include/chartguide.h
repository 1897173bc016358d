#ifndef CHARTGUIDE_H
#define CHARTGUIDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_NULL_ARGUMENT = 1,
  CG_STATUS_INVALID_UTF8 = 2,
  CG_STATUS_BAD_IMAGE = 3,
  CG_STATUS_MODEL = 4,
  CG_STATUS_PIPELINE = 5,
  CG_STATUS_PARSE = 6,
  CG_STATUS_EDIT_REJECTED = 7,
  CG_STATUS_STALE_VERSION = 8,
  CG_STATUS_WORKFLOW_COMPLETE = 9,
  CG_STATUS_WRONG_STATE = 10,
  CG_STATUS_NOT_FOUND = 11,
  CG_STATUS_IO = 12,
  CG_STATUS_PANIC = 13,
} CgStatus;

/**
 * A model backend.
 */
typedef struct CgModel CgModel;

/**
 * One analysed chart with its current workflow.
 */
typedef struct CgSession CgSession;

/**
 * Bytes owned by the library.
 */
typedef struct CgBuffer {
  uint8_t *data;
  size_t len;
} CgBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *cg_version(void);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next library call on this thread.
 */
const char *cg_last_error(void);

/**
 * Deterministic mock backend that knows the bundled corpus rendered with `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum CgStatus cg_model_mock_new(uint64_t seed, struct CgModel **out);

/**
 * Mock backend reading `*.groundtruth.json` files from `dir`.
 *
 * # Safety
 * `dir` must be a nul-terminated string; `out` must be writable.
 */
enum CgStatus cg_model_mock_from_dir(const char *dir, struct CgModel **out);

/**
 * Replays a recorded cassette; unrecorded requests fail.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum CgStatus cg_model_cassette_open(const char *path, struct CgModel **out);

/**
 * # Safety
 * `model` must come from a `cg_model_*` constructor, or be null.
 */
void cg_model_free(struct CgModel *model);

/**
 * Analyses a PNG chart. The session keeps its own reference to the model.
 *
 * # Safety
 * `png` must point to `len` readable bytes; `out` must be writable.
 */
enum CgStatus cg_session_new(const struct CgModel *model,
                             const uint8_t *png,
                             size_t len,
                             struct CgSession **out);

/**
 * # Safety
 * `session` must come from `cg_session_new`, or be null.
 */
void cg_session_free(struct CgSession *session);

/**
 * `chartspec.v1` document.
 *
 * # Safety
 * `session` must be live; `out` must be writable.
 */
enum CgStatus cg_session_spec_json(struct CgSession *session, char **out);

/**
 * `semantic_regions.v1` document.
 *
 * # Safety
 * `session` must be live; `out` must be writable.
 */
enum CgStatus cg_session_regions_json(struct CgSession *session, char **out);

/**
 * Decomposes `question` and replaces the session's workflow.
 *
 * # Safety
 * `session` must be live; `question` must be a nul-terminated string.
 */
enum CgStatus cg_session_ask(struct CgSession *session, const char *question);

/**
 * `workflow.v1` document.
 *
 * # Safety
 * `session` must be live; `out` must be writable.
 */
enum CgStatus cg_session_workflow_json(struct CgSession *session, char **out);

/**
 * Applies an `edit.v1` document. A rejected edit leaves the workflow unchanged.
 *
 * # Safety
 * `session` must be live; `edit_json` must be a nul-terminated string.
 */
enum CgStatus cg_session_edit(struct CgSession *session, const char *edit_json);

/**
 * Completes the active step and activates the next one.
 *
 * # Safety
 * `session` must be live.
 */
enum CgStatus cg_session_advance(struct CgSession *session);

/**
 * `guidance.v1` document for the subtask with id `subtask`.
 *
 * # Safety
 * `session` must be live; `out` must be writable.
 */
enum CgStatus cg_session_step_json(struct CgSession *session, uint32_t subtask, char **out);

/**
 * Overlay PNG for the subtask with id `subtask`.
 *
 * # Safety
 * `session` must be live; `out` must be writable.
 */
enum CgStatus cg_session_overlay_png(struct CgSession *session,
                                     uint32_t subtask,
                                     struct CgBuffer *out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void cg_string_free(char *s);

/**
 * # Safety
 * `buf` must have been filled by this library and not freed before.
 */
void cg_buffer_free(struct CgBuffer buf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHARTGUIDE_H */
