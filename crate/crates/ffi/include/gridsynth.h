#ifndef GRIDSYNTH_H
#define GRIDSYNTH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_NULL_ARGUMENT = 1,
  GS_STATUS_INVALID_UTF8 = 2,
  GS_STATUS_SYNTAX = 3,
  GS_STATUS_TYPE = 4,
  GS_STATUS_RUNTIME = 5,
  GS_STATUS_UNKNOWN_ENV = 6,
  GS_STATUS_IO = 7,
  GS_STATUS_INVALID = 8,
  GS_STATUS_PANIC = 9,
} GsStatus;

/**
 * A probabilistic grammar over one environment's DSL.
 */
typedef struct GsGrammar GsGrammar;

/**
 * A parsed program; it keeps its own copy of any library function it calls.
 */
typedef struct GsProgram GsProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gs_version(void);

/**
 * Message of the last failure on this thread; valid until the next failing call.
 */
const char *gs_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void gs_string_free(char *s);

/**
 * Uniform grammar for `env` (`maze`, `asterix` or `spaceinvaders`).
 *
 * # Safety
 * `env` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GsStatus gs_grammar_uniform(const char *env, struct GsGrammar **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GsStatus gs_grammar_from_json(const char *json, struct GsGrammar **out);

/**
 * # Safety
 * `g` must be a live grammar handle and `out` a valid pointer.
 */
enum GsStatus gs_grammar_to_json(const struct GsGrammar *g, char **out);

/**
 * # Safety
 * `g` must come from this library or be null.
 */
void gs_grammar_free(struct GsGrammar *g);

/**
 * Parses `source` against the grammar's primitives and library and checks that it is well typed.
 *
 * # Safety
 * `g` must be a live grammar handle, `source` a NUL-terminated string, `out` valid.
 */
enum GsStatus gs_program_parse(const struct GsGrammar *g,
                               const char *source,
                               struct GsProgram **out);

/**
 * # Safety
 * `p` must be a live program handle and `out` a valid pointer.
 */
enum GsStatus gs_program_print(const struct GsProgram *p, char **out);

/**
 * Description length of the program in nats.
 *
 * # Safety
 * Both handles must be live and `out` a valid pointer.
 */
enum GsStatus gs_program_description_length(const struct GsGrammar *g,
                                            const struct GsProgram *p,
                                            double *out);

/**
 * # Safety
 * `p` must come from this library or be null.
 */
void gs_program_free(struct GsProgram *p);

/**
 * Runs the program on a row-major `width * height` grid of object codes. `direction` is
 * the maze heading 0..3, or negative when the environment has none. The chosen action is
 * written as its word (`left`, `forward`, ...).
 *
 * # Safety
 * `p` must be live, `cells` must point to `width * height` bytes, `out` must be valid.
 */
enum GsStatus gs_program_exec(const struct GsProgram *p,
                              const uint8_t *cells,
                              size_t width,
                              size_t height,
                              int direction,
                              char **out);

/**
 * Renders an explanation panel for one state: `format` 0 is ASCII, 1 is SVG.
 *
 * # Safety
 * As for [`gs_program_exec`].
 */
enum GsStatus gs_program_explain(const struct GsProgram *p,
                                 const uint8_t *cells,
                                 size_t width,
                                 size_t height,
                                 int direction,
                                 int format,
                                 char **out);

/**
 * Text prompt for a single state-action pair.
 *
 * # Safety
 * As for [`gs_program_exec`]; `action` must be a NUL-terminated action word.
 */
enum GsStatus gs_encode_step(const char *env,
                             const uint8_t *cells,
                             size_t width,
                             size_t height,
                             int direction,
                             const char *action,
                             char **out);

/**
 * The first `count` programs in order of description length, one per line.
 *
 * # Safety
 * `g` must be a live grammar handle and `out` a valid pointer.
 */
enum GsStatus gs_enumerate(const struct GsGrammar *g, size_t max_depth, size_t count, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDSYNTH_H */
