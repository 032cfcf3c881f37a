#ifndef FAN_CAPI_H
#define FAN_CAPI_H

/* C API for the fanshape library.
 *
 * The shared library wraps the C++ core behind opaque handles and status
 * codes so it can be driven from any language with a C FFI. A typical
 * session:
 *
 *   fan_config* cfg = fan_config_create();
 *   fan_config_load_file(cfg, "run.cfg");        // optional
 *   fan_config_set(cfg, "ppo.alpha", "0.5");     // optional overrides
 *   fan_status rc = fan_run_train_ppo(cfg);
 *   if (rc != FAN_OK) fprintf(stderr, "%s\n", fan_last_error());
 *   fan_config_destroy(cfg);
 *
 * All functions are thread-compatible: distinct handles may be used from
 * distinct threads; a single handle must not be shared without external
 * synchronization. fan_last_error() returns a thread-local message.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct fan_config fan_config;

typedef enum fan_status {
    FAN_OK = 0,
    FAN_ERR_VALIDATION = 1, /* bad config value, unknown key, parse failure */
    FAN_ERR_NUMERIC = 2,    /* non-finite loss, failed audit, solver failure */
    FAN_ERR_IO = 3,         /* missing or unwritable file */
    FAN_ERR_INTERNAL = 4
} fan_status;

/* Library version string, static storage. */
const char* fan_version(void);

/* Message for the most recent failing call on this thread. */
const char* fan_last_error(void);

/* Configuration handle with every key at its documented default. */
fan_config* fan_config_create(void);
void fan_config_destroy(fan_config* cfg);

/* Applies "key = value" lines from a file over the current values. */
fan_status fan_config_load_file(fan_config* cfg, const char* path);

/* Sets one dotted key from text, e.g. ("target.sigma", "0.3"). */
fan_status fan_config_set(fan_config* cfg, const char* key, const char* value);

/* Reads one key as text into buf (NUL-terminated, truncated to len). */
fan_status fan_config_get(const fan_config* cfg, const char* key, char* buf, size_t len);

/* Key enumeration, for building CLIs: count and i-th key name. */
size_t fan_config_key_count(void);
const char* fan_config_key_name(size_t index);

/* Validates every section; FAN_ERR_VALIDATION names the offending field
 * through fan_last_error(). */
fan_status fan_config_validate(const fan_config* cfg);

/* Subcommand entry points. Outputs land in the configured out_dir. */
fan_status fan_run_collect_demos(const fan_config* cfg);
fan_status fan_run_train_sft(const fan_config* cfg);
fan_status fan_run_train_ppo(const fan_config* cfg);
fan_status fan_run_eval(const fan_config* cfg);
fan_status fan_run_verify_prop1(const fan_config* cfg);
fan_status fan_run_experiment(const fan_config* cfg);
fan_status fan_run_gradcheck(const fan_config* cfg);

#ifdef __cplusplus
}
#endif

#endif /* FAN_CAPI_H */
