#ifndef CHAINEDIT_H
#define CHAINEDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CeStatus {
  CE_STATUS_OK = 0,
  CE_STATUS_NULL_ARGUMENT = 1,
  CE_STATUS_INVALID_UTF8 = 2,
  CE_STATUS_INVALID_INPUT = 3,
  CE_STATUS_IO = 4,
  CE_STATUS_ORACLE = 5,
  CE_STATUS_CONFLICT = 6,
  CE_STATUS_INTERNAL = 99,
} CeStatus;

/**
 * Relation metadata handle.
 */
typedef struct CeMeta CeMeta;

/**
 * Knowledge oracle handle.
 */
typedef struct CeOracle CeOracle;

/**
 * Directive ruleset handle.
 */
typedef struct CeRuleSet CeRuleSet;

/**
 * Triple store handle.
 */
typedef struct CeStore CeStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library on this thread.
 */
const char *ce_last_error(void);

/**
 * Library version as a static string.
 */
const char *ce_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ce_string_free(char *s);

/**
 * Loads a tab-separated triple file, with an optional label file.
 *
 * # Safety
 * Paths must be valid C strings (`labels_path` may be null); `out` must be writable.
 */
enum CeStatus ce_store_load(const char *triples_path,
                            const char *labels_path,
                            struct CeStore **out);

/**
 * # Safety
 * `store` must come from [`ce_store_load`] and not have been freed.
 */
void ce_store_free(struct CeStore *store);

/**
 * Number of distinct triples, or 0 for a null handle.
 *
 * # Safety
 * `store` must be null or a live handle.
 */
size_t ce_store_len(const struct CeStore *store);

/**
 * Objects of `(subject, relation)` as a JSON array of entity ids.
 *
 * # Safety
 * Arguments must be live handles and valid C strings; `out_json` must be writable.
 */
enum CeStatus ce_objects_of(const struct CeStore *store,
                            const char *subject,
                            const char *relation,
                            char **out_json);

/**
 * Loads a ruleset JSON file.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum CeStatus ce_ruleset_load(const char *path, struct CeRuleSet **out);

/**
 * Parses ruleset JSON held in memory.
 *
 * # Safety
 * `json` must be a valid C string; `out` must be writable.
 */
enum CeStatus ce_ruleset_from_json(const char *json, struct CeRuleSet **out);

/**
 * # Safety
 * `rules` must be null or a live handle.
 */
size_t ce_ruleset_len(const struct CeRuleSet *rules);

/**
 * # Safety
 * `rules` must come from this library and not have been freed.
 */
void ce_ruleset_free(struct CeRuleSet *rules);

/**
 * Loads relation metadata. A null path gives generic templates for every relation.
 *
 * # Safety
 * `path` must be null or a valid C string; `out` must be writable.
 */
enum CeStatus ce_meta_load(const char *path, struct CeMeta **out);

/**
 * # Safety
 * `meta` must come from this library and not have been freed.
 */
void ce_meta_free(struct CeMeta *meta);

/**
 * Oracle answering from `store`, with an optional `label<TAB>rule` judge table.
 * The store handle may be freed afterwards.
 *
 * # Safety
 * `store` must be a live handle; `judge_table_path` null or a valid C string.
 */
enum CeStatus ce_oracle_mock_new(const struct CeStore *store,
                                 const char *judge_table_path,
                                 struct CeOracle **out);

/**
 * # Safety
 * `oracle` must come from this library and not have been freed.
 */
void ce_oracle_free(struct CeOracle *oracle);

/**
 * Expands `edit` (`subject|relation|object`) into a batch, written to
 * `out_jsonl` in the batch-file format. `depth` 0 means the default.
 *
 * # Safety
 * Handles must be live; `edit` a valid C string; `out_jsonl` writable.
 */
enum CeStatus ce_expand(const char *edit,
                        const struct CeRuleSet *rules,
                        const struct CeOracle *oracle,
                        const struct CeMeta *meta,
                        uint32_t depth,
                        char **out_jsonl);

/**
 * Parses a dot-path expression and returns its canonical text.
 *
 * # Safety
 * `path` must be a valid C string; `out_canonical` writable.
 */
enum CeStatus ce_parse_path(const char *path, char **out_canonical);

/**
 * Sets `*out_correct` to 1 when `answer` contains one of the gold strings
 * (a JSON array) as whole tokens, else 0.
 *
 * # Safety
 * Strings must be valid C strings; `out_correct` writable.
 */
enum CeStatus ce_score_answer(const char *answer, const char *golds_json, int32_t *out_correct);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINEDIT_H */
