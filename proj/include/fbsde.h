/* C interface to the FBSDE deep-solver library.
 *
 * All entry points are thread-compatible: distinct configs may be used from
 * distinct threads, one config must not be used concurrently. Functions
 * return FBSDE_OK on success; on failure they return a status code and
 * fbsde_last_error() carries a message for the calling thread.
 */
#ifndef FBSDE_H
#define FBSDE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fbsde_status {
  FBSDE_OK = 0,
  FBSDE_ERR_CONFIG = 1,  /* invalid configuration or arguments */
  FBSDE_ERR_NUMERIC = 2, /* non-finite values during compute */
  FBSDE_ERR_IO = 3,      /* filesystem failures */
  FBSDE_ERR_INTERNAL = 4
} fbsde_status;

/* Opaque run configuration (flat key = value map with a strict schema). */
typedef struct fbsde_config fbsde_config;

const char* fbsde_version(void);

/* Message for the last failing call on this thread; empty string if none. */
const char* fbsde_last_error(void);

/* Configuration lifecycle. A fresh config carries the schema defaults. */
fbsde_status fbsde_config_create(fbsde_config** out);
void fbsde_config_destroy(fbsde_config* config);
fbsde_status fbsde_config_load_file(fbsde_config* config, const char* path);
fbsde_status fbsde_config_set(fbsde_config* config, const char* key,
                              const char* value);
/* Copies the value of `key` into buf (NUL-terminated, truncating). */
fbsde_status fbsde_config_get(const fbsde_config* config, const char* key,
                              char* buf, size_t buf_len);
/* Validates the whole config without running anything. */
fbsde_status fbsde_config_validate(const fbsde_config* config);

/* Train the configured scheme; writes checkpoint_final.fbck,
 * loss_history.csv and run_meta.json into out_dir. */
fbsde_status fbsde_run_train(const fbsde_config* config, const char* out_dir);

/* Relative-error report of a checkpoint along fresh verification paths.
 * Pass NULL (or set eval.use-exact) to evaluate the closed-form solution.
 * Writes error_report.csv / error_report.svg / run_meta.json. */
fbsde_status fbsde_run_evaluate(const fbsde_config* config,
                                const char* checkpoint_path,
                                const char* out_dir);

/* Per-N training on coupled noise plus the Y0 error table
 * (convergence.csv). Set extrapolate to fill the extrapolated column;
 * this requires each N to be 4x the previous. */
fbsde_status fbsde_run_convergence(const fbsde_config* config,
                                   const int* n_list, int n_count,
                                   int extrapolate, const char* out_dir);

/* Plain vs multiscale network on the oscillatory problem, same seed and
 * noise (compare.csv / compare.svg). */
fbsde_status fbsde_run_mscale_compare(const fbsde_config* config,
                                      const char* out_dir);

/* Forward trajectories with Y, Z columns from a checkpoint (or the closed
 * form when checkpoint_path is NULL) into out_csv. */
fbsde_status fbsde_run_paths_dump(const fbsde_config* config,
                                  const char* checkpoint_path, int n_paths,
                                  const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* FBSDE_H */
