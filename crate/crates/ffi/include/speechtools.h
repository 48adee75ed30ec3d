#ifndef SPEECHTOOLS_H
#define SPEECHTOOLS_H

/* Generated by build.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StAlignFormat {
  ST_ALIGN_FORMAT_TEXT_GRID = 0,
  ST_ALIGN_FORMAT_ANNOTATION_JSON = 1,
} StAlignFormat;

typedef enum StStatus {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument is not UTF-8 or the input is otherwise malformed.
   */
  ST_STATUS_INVALID_INPUT = 2,
  ST_STATUS_G2P = 3,
  ST_STATUS_AUDIO = 4,
  ST_STATUS_MODEL = 5,
  ST_STATUS_ALIGN = 6,
  ST_STATUS_VAD = 7,
  ST_STATUS_KWS = 8,
  ST_STATUS_FORMAT = 9,
  /**
   * Internal error; the library caught a panic.
   */
  ST_STATUS_PANIC = 10,
} StStatus;

/**
 * Grapheme-to-phoneme converter with the built-in rules and lexicon.
 */
typedef struct StG2p StG2p;

/**
 * Acoustic model.
 */
typedef struct StModel StModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *st_version(void);

/**
 * Message of the last failed call on this thread, empty after a
 * success. Valid until the next call on the same thread.
 */
const char *st_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void st_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum StStatus st_g2p_new(struct StG2p **out);

/**
 * # Safety
 * `g` must come from `st_g2p_new` or be null.
 */
void st_g2p_free(struct StG2p *g);

/**
 * Phonemic transcription of UTF-8 `text`: one line for the whole text
 * when `canonical` is non-zero, otherwise `word<TAB>phones` lines.
 *
 * # Safety
 * Pointers must be valid; `text` NUL-terminated.
 */
enum StStatus st_g2p_transcribe(const struct StG2p *g,
                                const char *text_in,
                                int canonical,
                                char **out);

/**
 * Loads an acoustic model file.
 *
 * # Safety
 * `path` NUL-terminated, `out` valid.
 */
enum StStatus st_model_load(const char *path, struct StModel **out);

/**
 * # Safety
 * `m` must come from `st_model_load` or be null.
 */
void st_model_free(struct StModel *m);

/**
 * Aligns `transcript` to the audio; the result is a TextGrid or
 * annotation JSON.
 *
 * # Safety
 * `samples` holds `n` floats; other pointers valid.
 */
enum StStatus st_align(const struct StModel *m,
                       const float *samples,
                       size_t n,
                       uint32_t sample_rate,
                       const char *transcript,
                       enum StAlignFormat format,
                       char **out);

/**
 * Speech segments as `start end speech|nonspeech` lines, from an energy
 * gate.
 *
 * # Safety
 * `samples` holds `n` floats; `out` valid.
 */
enum StStatus st_vad(const float *samples, size_t n, uint32_t sample_rate, char **out);

/**
 * Keyword hits in the text listing format. `keywords` is comma
 * separated; a NaN `threshold` selects the default.
 *
 * # Safety
 * `samples` holds `n` floats; other pointers valid.
 */
enum StStatus st_kws(const struct StModel *m,
                     const float *samples,
                     size_t n,
                     uint32_t sample_rate,
                     const char *keywords,
                     double threshold,
                     char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPEECHTOOLS_H */
