/* Copyright 2026 The bevkd Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the bevkd library. Every function returns a status code;
 * on failure bevkd_last_error() describes the problem for the calling thread.
 * Handles are opaque and must be released with their matching _free call.
 */

#ifndef BEVKD_H_
#define BEVKD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BEVKD_API __declspec(dllexport)
#else
#define BEVKD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bevkd_status {
  BEVKD_OK = 0,
  BEVKD_ERR_VALIDATION = 1, /* bad input, config, or file contents */
  BEVKD_ERR_RUNTIME = 2     /* I/O or numeric failure */
} bevkd_status;

typedef struct bevkd_config bevkd_config;
typedef struct bevkd_checkpoint bevkd_checkpoint;
typedef struct bevkd_scan bevkd_scan;

BEVKD_API const char* bevkd_last_error(void);
BEVKD_API const char* bevkd_version(void);

/* Configuration. A NULL path yields the built-in defaults. */
BEVKD_API bevkd_status bevkd_config_load(const char* path, bevkd_config** out);
BEVKD_API bevkd_status bevkd_config_parse(const char* json_text, bevkd_config** out);
BEVKD_API bevkd_status bevkd_config_set_seed(bevkd_config* cfg, uint64_t seed);
/* Writes the normalized config as JSON into buf (NUL-terminated). *needed
 * receives the required size including the terminator. */
BEVKD_API bevkd_status bevkd_config_to_json(const bevkd_config* cfg, char* buf, size_t cap, size_t* needed);
BEVKD_API void bevkd_config_free(bevkd_config* cfg);

/* Checkpoints. */
BEVKD_API bevkd_status bevkd_checkpoint_load(const char* path, bevkd_checkpoint** out);
BEVKD_API bevkd_status bevkd_checkpoint_save(const bevkd_checkpoint* ckpt, const char* path);
BEVKD_API void bevkd_checkpoint_free(bevkd_checkpoint* ckpt);

/* Training. Logs and checkpoint files are written under out_dir; out may be
 * NULL when the caller only needs the files. */
BEVKD_API bevkd_status bevkd_pretrain_teacher(const bevkd_config* cfg, const char* out_dir,
                                              bevkd_checkpoint** out);
BEVKD_API bevkd_status bevkd_train_student(const bevkd_config* cfg, const bevkd_checkpoint* teacher,
                                           const char* out_dir, bevkd_checkpoint** out);

/* Evaluates on the config's val split and writes miou.csv under out_dir. */
BEVKD_API bevkd_status bevkd_evaluate(const bevkd_config* cfg, const bevkd_checkpoint* model, const char* out_dir,
                                      double* miou, double* accuracy);

/* Runs every finite-difference check; *passed is 1 when all pass. A non-NULL
 * corrupt_module deliberately breaks that module's gradient. */
BEVKD_API bevkd_status bevkd_gradcheck(const bevkd_config* cfg, uint64_t seed, const char* corrupt_module,
                                       const char* out_dir, int* passed, double* max_relative_error);

/* Scans. labels_path may be NULL. Labels are remapped with the config's remap. */
BEVKD_API bevkd_status bevkd_scan_load(const bevkd_config* cfg, const char* bin_path, const char* labels_path,
                                       bevkd_scan** out);
BEVKD_API size_t bevkd_scan_num_points(const bevkd_scan* scan);
/* Copies 4 floats (x, y, z, intensity) per point; cap counts floats. */
BEVKD_API bevkd_status bevkd_scan_copy_points(const bevkd_scan* scan, float* dst, size_t cap);
BEVKD_API bevkd_status bevkd_scan_copy_labels(const bevkd_scan* scan, uint32_t* dst, size_t cap);
BEVKD_API void bevkd_scan_free(bevkd_scan* scan);

/* Height map always; error map when the scan has labels and model is non-NULL. */
BEVKD_API bevkd_status bevkd_export_maps(const bevkd_config* cfg, const bevkd_scan* scan,
                                         const bevkd_checkpoint* model, const char* out_dir);

/* Writes the synthetic dataset described by the config to out_dir. */
BEVKD_API bevkd_status bevkd_synth_data(const bevkd_config* cfg, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* BEVKD_H_ */
