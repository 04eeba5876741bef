/* C interface to the e3rewrite library.
 *
 * Every fallible call returns an e3_status. On failure a message is kept per
 * thread and can be read with e3_last_error() until the next failing call on
 * that thread. Strings returned through char** out-parameters are owned by
 * the caller and must be released with e3_string_free().
 *
 * Handles are not thread-safe; use one handle per thread.
 */
#ifndef E3REWRITE_H
#define E3REWRITE_H

#include <stddef.h>

#if defined(_WIN32)
#define E3_API __declspec(dllexport)
#else
#define E3_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum e3_status {
  E3_OK = 0,
  E3_ERR_PARSE = 1,
  E3_ERR_SYNTAX_REJECTED = 2,
  E3_ERR_CONNECTION = 3,
  E3_ERR_TIMEOUT = 4,
  E3_ERR_EXECUTION = 5,
  E3_ERR_PLAN_FORMAT = 6,
  E3_ERR_DIMENSION_MISMATCH = 7,
  E3_ERR_ZERO_VECTOR = 8,
  E3_ERR_SCHEMA = 9,
  E3_ERR_NON_POSITIVE_BASELINE = 10,
  E3_ERR_UNRESOLVED_EQUIVALENCE = 11,
  E3_ERR_GROUP_TOO_SMALL = 12,
  E3_ERR_LENGTH_MISMATCH = 13,
  E3_ERR_EMPTY_REHEARSAL_POOL = 14,
  E3_ERR_EMPTY_INPUT = 15,
  E3_ERR_PROMPT_TOO_LONG = 16,
  E3_ERR_ENDPOINT_TIMEOUT = 17,
  E3_ERR_MALFORMED_RESPONSE = 18,
  E3_ERR_CONFIG = 19,
  E3_ERR_IO = 20,
  E3_ERR_INVALID_ARGUMENT = 21,
  E3_ERR_EMBEDDING = 22,
  E3_ERR_INTERNAL = 99
} e3_status;

typedef struct e3_db e3_db;         /* database session */
typedef struct e3_pool e3_pool;     /* demonstration pool */
typedef struct e3_engine e3_engine; /* configured rewrite pipeline */

E3_API const char* e3_version(void);
E3_API const char* e3_status_name(e3_status status);
E3_API const char* e3_last_error(void);
E3_API void e3_string_free(char* s);

/* dsn: "stub:<fixture dir>" or "postgresql://...". */
E3_API e3_status e3_db_open(const char* dsn, double statement_timeout_s, e3_db** out);
E3_API void e3_db_close(e3_db* db);

/* Linearized plan plus bottleneck lines for `sql`; analyze != 0 executes it
 * for runtime counters. config_json may be NULL. */
E3_API e3_status e3_hint(e3_db* db, const char* sql, int analyze, const char* config_json,
                         char** out_text);

E3_API e3_status e3_struct_similarity(const char* sql_a, const char* sql_b, double* out);

/* A missing file yields an empty pool. config_json (may be NULL) supplies
 * alpha and admit_speedup. */
E3_API e3_status e3_pool_load(const char* path, const char* config_json, e3_pool** out);
E3_API e3_status e3_pool_save(const e3_pool* pool, const char* path);
E3_API size_t e3_pool_size(const e3_pool* pool);
E3_API void e3_pool_close(e3_pool* pool);

/* config_json: the configuration object documented in README.md. */
E3_API e3_status e3_engine_create(const char* config_json, e3_engine** out);
E3_API void e3_engine_destroy(e3_engine* engine);

/* Rewrites one query. out_json receives
 * {"sql","used_original","chosen_index","pool_admitted","speedup",
 *  "candidates":[{"sql","r_exec","r_eq","r_perf","r_total","decided_by"}],
 *  "prompt"}. */
E3_API e3_status e3_rewrite(e3_engine* engine, e3_db* db, e3_pool* pool, const char* sql,
                            char** out_json);

/* system: "identity", "replay:<file>" or "e3" (needs engine and pool).
 * out_table and out_machine may be NULL. */
E3_API e3_status e3_bench(e3_db* db, const char* corpus_path, const char* system,
                          e3_engine* engine, e3_pool* pool, const char* config_json,
                          char** out_table, char** out_machine);

/* Samples one group per corpus query, advances the curriculum and writes a
 * training batch to batch_path. out_summary (may be NULL) receives
 * {"groups","final_stage","transition_at","window_rate"}. */
E3_API e3_status e3_collect(e3_engine* engine, e3_db* db, e3_pool* pool, const char* corpus_path,
                            const char* batch_path, char** out_summary);

#ifdef __cplusplus
}
#endif

#endif /* E3REWRITE_H */
