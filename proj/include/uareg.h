#ifndef UAREG_H
#define UAREG_H

/* C interface to the underwater-acoustic recognition library. All entry
 * points return UAREG_OK on success; on failure they return a nonzero status
 * and leave a message readable through uareg_last_error until the next call
 * on the same session. Sessions are not thread-safe; use one per thread.
 *
 * Configuration is a flat key = value store shared by all operations. Keys
 * (with defaults) are documented in README.md; later assignments win, and the
 * UAREG_SEED environment variable overrides the "seed" key at run time. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define UAREG_OK 0
#define UAREG_ERR_RUNTIME 1 /* I/O, numeric, or contract failure at run time */
#define UAREG_ERR_USAGE 2   /* malformed configuration or arguments */

typedef struct uareg_session uareg_session;

const char* uareg_version(void);

uareg_session* uareg_session_new(void);
void uareg_session_free(uareg_session* s);

/* Message for the most recent failing call; empty string when none. */
const char* uareg_last_error(const uareg_session* s);

int uareg_config_set(uareg_session* s, const char* key, const char* value);
int uareg_config_load_file(uareg_session* s, const char* path);
/* Value for key, or NULL when unset. The pointer is valid until the next
 * config mutation on the session. */
const char* uareg_config_get(uareg_session* s, const char* key);

/* Scan the .wav files under each data_dir/<label> directory, assign record
 * splits from split_spec, cut the segment grid, and write a manifest (one
 * JSON object per line). */
int uareg_split(uareg_session* s, const char* out_manifest);

/* Status UAREG_OK when every record id stays on one side of the train/test
 * divide; UAREG_ERR_RUNTIME with the leaked ids otherwise. */
int uareg_validate_split(uareg_session* s, const char* manifest);

/* Extract features for every manifest entry into out_dir. */
int uareg_extract(uareg_session* s, const char* manifest, const char* out_dir);

/* Write augmented features plus JSON sidecars for a handful of training
 * entries; config key "mode" picks noise, lmr, or mixup. */
int uareg_augment_preview(uareg_session* s, const char* manifest, const char* out_dir);

/* Generate the synthetic tone corpus (WAV files, split spec, manifest). */
int uareg_synth_data(uareg_session* s, const char* out_dir);

/* Full training run; writes metrics.csv and best.ckpt under out_dir.
 * best_val_acc may be NULL. */
int uareg_train(uareg_session* s, const char* manifest, const char* out_dir,
                double* best_val_acc);

/* Evaluate a checkpoint on one manifest split; writes confusion.csv and
 * confusion.pgm under out_dir. accuracy may be NULL. */
int uareg_eval(uareg_session* s, const char* ckpt, const char* manifest, const char* split,
               const char* out_dir, double* accuracy);

/* Noise-robustness sweep over the config key "ranges"; writes snr_sweep.csv
 * under out_dir. */
int uareg_snr_sweep(uareg_session* s, const char* ckpt, const char* manifest,
                    const char* out_dir);

/* One training per value in the config key "alphas"; writes alpha_sweep.csv
 * plus per-run directories under out_dir. */
int uareg_alpha_sweep(uareg_session* s, const char* manifest, const char* out_dir);

/* Finite-difference check of the full objective through a tiny model.
 * Status UAREG_OK iff max_rel_err < 1e-5. max_rel_err may be NULL. */
int uareg_gradcheck(uareg_session* s, double* max_rel_err);

#ifdef __cplusplus
}
#endif

#endif /* UAREG_H */
