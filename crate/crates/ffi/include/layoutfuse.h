#ifndef LAYOUTFUSE_H
#define LAYOUTFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_ARGUMENT = 1,
  LF_STATUS_INVALID_UTF8 = 2,
  /*
   JSON input did not match its schema.
   */
  LF_STATUS_INVALID_INPUT = 3,
  LF_STATUS_LAYOUT = 4,
  LF_STATUS_CODEGEN = 5,
  LF_STATUS_EVAL = 6,
  LF_STATUS_OUT_OF_RANGE = 7,
  LF_STATUS_PANIC = 99,
} LfStatus;

/*
 Element list parsed from JSON.
 */
typedef struct LfElements LfElements;

/*
 Layout tree, optionally carrying per-leaf code.
 */
typedef struct LfTree LfTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer is
 valid until the next layoutfuse call on the same thread.
 */
const char *lf_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *lf_version(void);

/*
 # Safety
 `s` must come from a layoutfuse out-parameter and not be freed twice.
 */
void lf_string_free(char *s);

/*
 Parse an element list (`[{"id", "kind", "bbox"}]`).

 # Safety
 `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LfStatus lf_elements_from_json(const char *json, struct LfElements **out);

/*
 # Safety
 `elements` must be NULL or a live handle.
 */
size_t lf_elements_len(const struct LfElements *elements);

/*
 # Safety
 `elements` must be NULL or a handle not yet freed.
 */
void lf_elements_free(struct LfElements *elements);

/*
 Group and divide `elements` on a `width` x `height` page. `config_json`
 may be NULL for defaults, or a JSON object with any of the `grouping`,
 `layout` and `generation` sections.

 # Safety
 `elements` must be a live handle, `config_json` NULL or NUL-terminated,
 and `out` writable.
 */
enum LfStatus lf_layout_parse(const struct LfElements *elements,
                              uint32_t width,
                              uint32_t height,
                              const char *config_json,
                              struct LfTree **out);

/*
 # Safety
 `json` must be NUL-terminated and `out` writable.
 */
enum LfStatus lf_tree_from_json(const char *json, struct LfTree **out);

/*
 # Safety
 `tree` must be a live handle and `out` writable.
 */
enum LfStatus lf_tree_to_json(const struct LfTree *tree, char **out);

/*
 # Safety
 `tree` must be NULL or a live handle.
 */
size_t lf_tree_leaf_count(const struct LfTree *tree);

/*
 Attach `code` to the leaf with depth-first index `leaf`.

 # Safety
 `tree` must be a live handle and `code` NUL-terminated.
 */
enum LfStatus lf_tree_set_leaf_code(struct LfTree *tree, size_t leaf, const char *code);

/*
 Fill every leaf with deterministic placeholder code.

 # Safety
 `tree` must be a live handle.
 */
enum LfStatus lf_tree_generate_mock(struct LfTree *tree);

/*
 Fuse a tree whose leaves all carry code into an HTML document.

 # Safety
 `tree` must be a live handle and `out` writable.
 */
enum LfStatus lf_tree_fuse(const struct LfTree *tree, char **out);

/*
 # Safety
 `tree` must be NULL or a handle not yet freed.
 */
void lf_tree_free(struct LfTree *tree);

/*
 BLEU-`max_n` of two HTML strings with uniform weights.

 # Safety
 Both strings must be NUL-terminated and `score` writable.
 */
enum LfStatus lf_bleu_html(const char *candidate,
                           const char *reference,
                           size_t max_n,
                           double *score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYOUTFUSE_H */
