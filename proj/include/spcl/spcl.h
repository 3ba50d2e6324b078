/* C interface to the sparse continual-learning engine.
 *
 * Every function returns an spcl_status; on failure the message is available
 * from spcl_last_error() on the calling thread until the next call.
 * Handles are opaque and must be released with the matching _free function.
 */
#ifndef SPCL_H
#define SPCL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SPCL_API __declspec(dllexport)
#else
#define SPCL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum spcl_status {
  SPCL_OK = 0,
  SPCL_ERR_DIMENSION = 1,
  SPCL_ERR_NUMERIC = 2,
  SPCL_ERR_DEGENERATE_EMBEDDING = 3,
  SPCL_ERR_INDEX = 4,
  SPCL_ERR_ARGUMENT = 5,
  SPCL_ERR_SCHEDULE_EXHAUSTED = 6,
  SPCL_ERR_STATE = 7,
  SPCL_ERR_UNDEFINED_METRIC = 8,
  SPCL_ERR_EMPTY_BUFFER = 9,
  SPCL_ERR_PARSE = 10,
  SPCL_ERR_SCHEMA = 11,
  SPCL_ERR_IO = 12,
  SPCL_ERR_TRAINING_FAILURE = 13,
  SPCL_ERR_CONFIG = 14,
  SPCL_ERR_ORACLE = 15,
  SPCL_ERR_INTERNAL = 16
} spcl_status;

typedef struct spcl_config spcl_config;
typedef struct spcl_universe spcl_universe;
typedef struct spcl_model spcl_model;

/* Receives one log line; `user` is passed through unchanged. */
typedef void (*spcl_log_fn)(const char* line, void* user);

SPCL_API const char* spcl_last_error(void);
SPCL_API const char* spcl_status_name(spcl_status status);

/* Configuration */
SPCL_API spcl_status spcl_config_default(spcl_config** out);
SPCL_API spcl_status spcl_config_load(const char* path, spcl_config** out);
SPCL_API void spcl_config_free(spcl_config* config);
/* Replaces the seed list with a single seed. */
SPCL_API spcl_status spcl_config_set_seed(spcl_config* config, uint64_t seed);
/* "none", "sparse" or "full-finetune-er". */
SPCL_API spcl_status spcl_config_set_baseline(spcl_config* config, const char* baseline);
SPCL_API spcl_status spcl_config_set_checkpoint_dir(spcl_config* config, const char* dir);
SPCL_API spcl_status spcl_config_set_universe_dir(spcl_config* config, const char* dir);
/* Writes 16 hex digits and a terminating NUL into out (17 bytes). */
SPCL_API spcl_status spcl_config_hash(const spcl_config* config, char* out);

/* Data */
SPCL_API spcl_status spcl_universe_generate(const spcl_config* config, spcl_universe** out);
/* Loads data.universe_dir when set, otherwise generates. */
SPCL_API spcl_status spcl_universe_resolve(const spcl_config* config, spcl_universe** out);
SPCL_API spcl_status spcl_universe_load(const char* dir, spcl_universe** out);
SPCL_API spcl_status spcl_universe_export(const spcl_universe* universe, const char* dir);
SPCL_API void spcl_universe_free(spcl_universe* universe);

/* Experiments */
SPCL_API spcl_status spcl_pretrain(const spcl_config* config, const spcl_universe* universe,
                                   const char* out_dir, spcl_log_fn log, void* user);
SPCL_API spcl_status spcl_run(const spcl_config* config, const spcl_universe* universe,
                              const char* out_dir, spcl_log_fn log, void* user);
/* Reads the "ablate" section of grid_path; the base settings come from config. */
SPCL_API spcl_status spcl_ablate(const spcl_config* config, const char* grid_path,
                                 const spcl_universe* universe, const char* out_dir,
                                 size_t workers, spcl_log_fn log, void* user);
/* Runs the oracle suite, logging one line per oracle. Returns SPCL_ERR_ORACLE
 * when any oracle fails; failures (may be NULL) receives the count. */
SPCL_API spcl_status spcl_gradcheck(uint64_t seed, int corrupt_backward, spcl_log_fn log,
                                    void* user, size_t* failures);

/* Models */
SPCL_API spcl_status spcl_model_load(const char* checkpoint_path, spcl_model** out);
SPCL_API void spcl_model_free(spcl_model* model);
SPCL_API size_t spcl_model_param_count(const spcl_model* model);
SPCL_API size_t spcl_model_input_dim(const spcl_model* model);
/* x is row-major rows × input_dim; labels receives `rows` predicted class ids. */
SPCL_API spcl_status spcl_model_predict(const spcl_model* model, const double* x, size_t rows,
                                        const size_t* candidates, size_t candidate_count,
                                        size_t* labels);

#ifdef __cplusplus
}
#endif

#endif
