#ifndef TWINBEAM_H
#define TWINBEAM_H

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_INVALID_ARGUMENT = 2,
  TB_STATUS_CONFIG_ERROR = 3,
  TB_STATUS_DATA_ERROR = 4,
  TB_STATUS_RUNTIME_ERROR = 5,
  /*
   Output buffer too small; the required size was still reported.
   */
  TB_STATUS_BUFFER_TOO_SMALL = 6,
  /*
   A Rust panic was caught at the boundary.
   */
  TB_STATUS_PANIC = 7,
} TbStatus;

/*
 Opaque codebook handle.
 */
typedef struct TbCodebook TbCodebook;

/*
 Opaque channel dataset handle.
 */
typedef struct TbDataset TbDataset;

/*
 Opaque scene handle.
 */
typedef struct TbScene TbScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *tb_version(void);

/*
 Message of the last failed call on this thread, or null. Valid until the
 next library call on the same thread.
 */
const char *tb_last_error_message(void);

/*
 # Safety
 `name` must be a NUL-terminated string; `out` must be writable.
 */
enum TbStatus tb_scene_builtin(const char *name, struct TbScene **out);

/*
 Parses and validates a scene from JSON text.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TbStatus tb_scene_from_json(const char *json, struct TbScene **out);

/*
 Canonical JSON of the scene into `buf`.

 # Safety
 `scene` must be a live handle; `buf` must hold `cap` bytes; `needed` may be null.
 */
enum TbStatus tb_scene_to_json(const struct TbScene *scene,
                               char *buf,
                               uintptr_t cap,
                               uintptr_t *needed);

/*
 # Safety
 `scene` must be null or a handle not yet freed.
 */
void tb_scene_free(struct TbScene *scene);

/*
 Traces every grid point of `scene` for a half-wavelength array.

 # Safety
 `scene` must be a live handle; `out` must be writable.
 */
enum TbStatus tb_dataset_generate(const struct TbScene *scene,
                                  uint32_t max_reflection_order,
                                  double geometry_noise_sigma,
                                  uintptr_t num_antennas,
                                  double carrier_frequency_hz,
                                  struct TbDataset **out);

/*
 # Safety
 `ds` must be a live handle; the out-pointers must be writable or null.
 */
enum TbStatus tb_dataset_counts(const struct TbDataset *ds,
                                uintptr_t *users,
                                uintptr_t *los,
                                uintptr_t *outage);

/*
 # Safety
 `ds` must be null or a handle not yet freed.
 */
void tb_dataset_free(struct TbDataset *ds);

/*
 DFT grid of `n` beams for the dataset's array.

 # Safety
 `ds` must be a live handle; `out` must be writable.
 */
enum TbStatus tb_codebook_dft(const struct TbDataset *ds, uintptr_t n, struct TbCodebook **out);

/*
 Clusters `ds` and learns one beam per cluster.

 `pipeline_json` is a pipeline configuration object, or null for the
 defaults of the dataset's array. Split mode yields the LoS beams followed
 by the NLoS beams in one codebook.

 # Safety
 `ds` must be a live handle; `pipeline_json` null or NUL-terminated; `out` writable.
 */
enum TbStatus tb_codebook_learn(const struct TbDataset *ds,
                                const char *pipeline_json,
                                struct TbCodebook **out);

/*
 Parses a codebook file's JSON text.

 # Safety
 `json` must be NUL-terminated; `out` must be writable.
 */
enum TbStatus tb_codebook_from_json(const char *json, struct TbCodebook **out);

/*
 # Safety
 `cb` must be a live handle; `buf` must hold `cap` bytes; `needed` may be null.
 */
enum TbStatus tb_codebook_to_json(const struct TbCodebook *cb,
                                  char *buf,
                                  uintptr_t cap,
                                  uintptr_t *needed);

/*
 Number of beams and antennas.

 # Safety
 `cb` must be a live handle; out-pointers writable or null.
 */
enum TbStatus tb_codebook_shape(const struct TbCodebook *cb, uintptr_t *beams, uintptr_t *antennas);

/*
 Copies the phases (radians) of beam `index` into `phases[0..len]`.

 # Safety
 `cb` must be a live handle; `phases` must hold `len` doubles.
 */
enum TbStatus tb_codebook_beam_phases(const struct TbCodebook *cb,
                                      uintptr_t index,
                                      double *phases,
                                      uintptr_t len);

/*
 # Safety
 `cb` must be null or a handle not yet freed.
 */
void tb_codebook_free(struct TbCodebook *cb);

/*
 Best-beam SNR summary of `cb` over `ds`. `mean_db` is NaN when every user
 is in outage.

 # Safety
 Handles must be live; out-pointers writable or null.
 */
enum TbStatus tb_evaluate(const struct TbCodebook *cb,
                          const struct TbDataset *ds,
                          double *mean_db,
                          double *outage_frac);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWINBEAM_H */
