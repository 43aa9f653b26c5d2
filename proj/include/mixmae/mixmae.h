#ifndef MIXMAE_H
#define MIXMAE_H

/* C interface to the mixmae library. Every call returns a status code; on
 * failure mixmae_last_error() describes the problem for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * mixmae_free_string(). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(MIXMAE_BUILDING_LIBRARY)
#define MIXMAE_API __attribute__((visibility("default")))
#else
#define MIXMAE_API
#endif

typedef enum mixmae_status {
  MIXMAE_OK = 0,
  MIXMAE_ERR_PARAMETER = 1,
  MIXMAE_ERR_DIMENSION = 2,
  MIXMAE_ERR_INDEX = 3,
  MIXMAE_ERR_CONFIG = 4,
  MIXMAE_ERR_CONTRACT = 5,
  MIXMAE_ERR_NUMERIC = 6,
  MIXMAE_ERR_IO = 7,
  MIXMAE_ERR_FORMAT = 8,
  MIXMAE_ERR_INTEGRITY = 9,
  MIXMAE_ERR_INGESTION = 10,
  MIXMAE_ERR_PARSE = 11,
  MIXMAE_ERR_INTERNAL = 12,
  MIXMAE_ERR_NULL_ARGUMENT = 13
} mixmae_status;

typedef struct mixmae_config mixmae_config;

MIXMAE_API const char* mixmae_version(void);
MIXMAE_API const char* mixmae_status_name(mixmae_status status);
MIXMAE_API const char* mixmae_last_error(void);
MIXMAE_API void mixmae_free_string(char* s);

/* Progress lines from long-running calls; NULL silences them. */
typedef void (*mixmae_log_fn)(const char* line, void* user);
MIXMAE_API void mixmae_set_log(mixmae_log_fn fn, void* user);

/* ---- configuration ---------------------------------------------------- */

MIXMAE_API mixmae_status mixmae_config_create(const char* preset, mixmae_config** out);
MIXMAE_API mixmae_status mixmae_config_parse(const char* text, mixmae_config** out);
MIXMAE_API mixmae_status mixmae_config_load(const char* path, mixmae_config** out);
/* Configuration snapshot stored in a checkpoint. */
MIXMAE_API mixmae_status mixmae_config_from_checkpoint(const char* path, mixmae_config** out);
MIXMAE_API void mixmae_config_destroy(mixmae_config* config);
MIXMAE_API mixmae_status mixmae_config_set(mixmae_config* config, const char* key,
                                           const char* value);
MIXMAE_API mixmae_status mixmae_config_get(const mixmae_config* config, const char* key,
                                           char** value);
MIXMAE_API mixmae_status mixmae_config_serialize(const mixmae_config* config, char** text);

/* ---- accounting ------------------------------------------------------- */

typedef struct mixmae_param_count {
  int64_t patch_embed;
  int64_t pos_embed;
  int64_t blocks;
  int64_t merging;
  int64_t final_norm;
  int64_t projection;
  int64_t encoder_total;
  int64_t decoder_total;
} mixmae_param_count;

/* Multiply-accumulate counts of one forward pass. */
typedef struct mixmae_flop_count {
  int64_t patch_embed;
  int64_t projections;
  int64_t attention;
  int64_t mlp;
  int64_t merging;
  int64_t head;
  int64_t encoder_macs;
  int64_t decoder_macs;
} mixmae_flop_count;

typedef struct mixmae_efficiency {
  int groups;
  double mixed_encoder_macs;
  double masked_encoder_macs;
  double encoder_ratio;
  double decoder_macs;
  double with_decoder_ratio;
} mixmae_efficiency;

MIXMAE_API mixmae_status mixmae_count_params(const mixmae_config* config, mixmae_param_count* out);
/* img_px <= 0 uses the configured edge. */
MIXMAE_API mixmae_status mixmae_count_flops(const mixmae_config* config, int img_px,
                                            mixmae_flop_count* out);
/* groups <= 0 uses mask.k. */
MIXMAE_API mixmae_status mixmae_efficiency_report(const mixmae_config* config, int groups,
                                                  mixmae_efficiency* out);

/* ---- training and evaluation ------------------------------------------ */

typedef struct mixmae_pretrain_options {
  const char* out_dir;     /* NULL or "": nothing written */
  const char* resume;      /* checkpoint path or NULL */
  int force;               /* accept a checkpoint with a different config hash */
  int64_t stop_after_step; /* < 0: run every epoch */
} mixmae_pretrain_options;

typedef struct mixmae_pretrain_result {
  int64_t steps;
  double final_loss;
  char checkpoint[1024];
} mixmae_pretrain_result;

MIXMAE_API mixmae_status mixmae_pretrain(const mixmae_config* config,
                                         const mixmae_pretrain_options* options,
                                         mixmae_pretrain_result* out);

typedef struct mixmae_eval {
  double train_accuracy;
  double test_accuracy;
  int64_t train_count;
  int64_t test_count;
} mixmae_eval;

/* checkpoint NULL evaluates a freshly initialised encoder. */
MIXMAE_API mixmae_status mixmae_probe(const mixmae_config* config, const char* checkpoint,
                                      int force, mixmae_eval* out);
MIXMAE_API mixmae_status mixmae_finetune(const mixmae_config* config, const char* checkpoint,
                                         int force, mixmae_eval* out);

/* grid: default | full | dual | reduction | fill | k. Writes ablation.csv and
 * a cell cache under out_dir. soft_failures counts ordering checks missing
 * the margin. */
MIXMAE_API mixmae_status mixmae_ablate(const mixmae_config* config, const char* grid,
                                       const char* out_dir, char** csv, int* soft_failures);

/* suite: primitives | composition | all. Returns a line per case. */
MIXMAE_API mixmae_status mixmae_grad_check(const char* suite, uint64_t seed, char** report,
                                           int* failures);

/* Summary of a metrics CSV. */
MIXMAE_API mixmae_status mixmae_report(const char* metrics_path, char** summary);
/* Writes an (original | mixed | reconstruction) PPM panel for `count` inputs. */
MIXMAE_API mixmae_status mixmae_write_panel(const mixmae_config* config, const char* checkpoint,
                                            int count, int force, const char* ppm_path);

/* CSV of the first max_steps steps (all when <= 0): step, epoch, lr and the
 * dataset indices each step consumes. */
MIXMAE_API mixmae_status mixmae_dump_schedule(const mixmae_config* config, int64_t max_steps,
                                              char** csv);

/* Human-readable description of a checkpoint; fails on corruption. */
MIXMAE_API mixmae_status mixmae_checkpoint_info(const char* path, char** text);

#ifdef __cplusplus
}
#endif

#endif
