/* Copyright 2026 The LGUNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef LGUNET_LGUNET_H_
#define LGUNET_LGUNET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(LGUNET_BUILDING_LIBRARY)
#define LGU_API __attribute__((visibility("default")))
#else
#define LGU_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lgu_status {
  LGU_OK = 0,
  LGU_ERR_INVALID_ARGUMENT = 1,  // bad option, key, value or call order
  LGU_ERR_DATA = 2,              // missing or malformed input files
  LGU_ERR_DIVERGED = 3,          // non-finite training loss
  LGU_ERR_PREREQUISITE = 4,      // an earlier stage checkpoint is missing
  LGU_ERR_IO = 5,                // cannot write output
  LGU_ERR_INTERNAL = 6,
} lgu_status;

// Message of the most recent failure on the calling thread. Valid until the
// next failing call on that thread.
LGU_API const char* lgu_last_error(void);
LGU_API const char* lgu_version(void);
LGU_API const char* lgu_status_name(lgu_status status);

// ---------------------------------------------------------------------------
// Run configuration

typedef struct lgu_config lgu_config;

// Defaults for a lesion class ("EX", "MA", "HE", "SE").
LGU_API lgu_status lgu_config_create(const char* lesion_class, lgu_config** out);
// Reads a key = value file; unknown keys are rejected.
LGU_API lgu_status lgu_config_load(const char* path, lgu_config** out);
LGU_API void lgu_config_destroy(lgu_config* config);

LGU_API lgu_status lgu_config_set(lgu_config* config, const char* key, const char* value);
// The returned strings are owned by the handle and stay valid until the next
// call on it.
LGU_API lgu_status lgu_config_get(lgu_config* config, const char* key, const char** value);
LGU_API lgu_status lgu_config_dump(lgu_config* config, const char** text);
LGU_API lgu_status lgu_config_fingerprint(lgu_config* config, const char** fingerprint);
// Applies LGUNET_DATA_ROOT when set.
LGU_API lgu_status lgu_config_apply_environment(lgu_config* config);
LGU_API lgu_status lgu_config_validate(const lgu_config* config);
// Key names accepted by lgu_config_set, newline separated.
LGU_API const char* lgu_config_keys(void);

// ---------------------------------------------------------------------------
// Reports: a text rendering plus labelled numeric entries

typedef struct lgu_report lgu_report;

LGU_API const char* lgu_report_text(const lgu_report* report);
LGU_API size_t lgu_report_count(const lgu_report* report);
LGU_API lgu_status lgu_report_entry(const lgu_report* report, size_t index, const char** label,
                                    double* value);
LGU_API void lgu_report_destroy(lgu_report* report);

// ---------------------------------------------------------------------------
// Commands

// geometry_preset: "desk" or "full". kind: "scattered" or "compact".
LGU_API lgu_status lgu_synth(const char* kind, int n_images, int n_test, uint64_t seed,
                             const char* lesion_class, const char* geometry_preset,
                             const char* out_dir, lgu_report** report);

// test_fraction < 0 leaves a missing split file as an error.
LGU_API lgu_status lgu_prepare(const lgu_config* config, double test_fraction, lgu_report** report);

typedef void (*lgu_epoch_callback)(const char* stage, int epoch, double lr, double loss,
                                   double val_aupr /* NaN when not measured */, void* user);

// stage: pretrain_global | pretrain_local | fuse_head | finetune_all, or the
// aliases global | local | fuse-head | finetune. Entries: epochs, steps,
// final_loss; the text holds the checkpoint path.
LGU_API lgu_status lgu_train_stage(const lgu_config* config, const char* stage,
                                   lgu_epoch_callback callback, void* user, lgu_report** report);

// checkpoint may be NULL for the most advanced checkpoint in run_dir.
// streams: comma separated subset of fused,global,local or "all".
// Entries are labelled "<stream>/pooled" and "<stream>/mean_image".
LGU_API lgu_status lgu_eval(const lgu_config* config, const char* checkpoint, const char* split,
                            const char* streams, lgu_report** report);

LGU_API lgu_status lgu_infer(const lgu_config* config, const char* checkpoint, const char* const* images,
                             size_t n_images, const char* out_dir, const char* stream,
                             lgu_report** report);

// Entries are labelled with the lesion class and hold its pooled AUPR.
LGU_API lgu_status lgu_curves(const lgu_config* config, const char* predictions, const char* out_dir,
                              const char* split, int trapezoid, lgu_report** report);

// ---------------------------------------------------------------------------
// Models and probability maps

typedef struct lgu_model lgu_model;
typedef struct lgu_probmap lgu_probmap;

LGU_API lgu_status lgu_model_load(const char* checkpoint, lgu_model** out);
LGU_API void lgu_model_destroy(lgu_model* model);
LGU_API lgu_status lgu_model_stage(const lgu_model* model, const char** stage);
// Reads an image file, center-crops it to the model frame and predicts.
LGU_API lgu_status lgu_model_predict(lgu_model* model, const char* image_path, const char* stream,
                                     lgu_probmap** out);

LGU_API int lgu_probmap_height(const lgu_probmap* map);
LGU_API int lgu_probmap_width(const lgu_probmap* map);
// Row-major probabilities, height * width values.
LGU_API const double* lgu_probmap_data(const lgu_probmap* map);
LGU_API lgu_status lgu_probmap_save(const lgu_probmap* map, const char* png_path);
LGU_API void lgu_probmap_destroy(lgu_probmap* map);

// ---------------------------------------------------------------------------
// Numeric helpers

LGU_API lgu_status lgu_aupr(const double* scores, const uint8_t* truth, size_t n, int trapezoid,
                            double* aupr);
LGU_API lgu_status lgu_poly_lr(double initial_lr, double power, int64_t total_steps, int64_t step,
                               double* lr);
// Number of windows in the patch grid of a frame.
LGU_API lgu_status lgu_patch_count(int frame_height, int frame_width, int patch, int* count);

#ifdef __cplusplus
}
#endif

#endif  // LGUNET_LGUNET_H_
