#ifndef AFHT_AFHT_H
#define AFHT_AFHT_H

#include <stddef.h>

#if defined(_WIN32)
#define AFHT_API __declspec(dllexport)
#elif defined(AFHT_BUILDING_LIBRARY)
#define AFHT_API __attribute__((visibility("default")))
#else
#define AFHT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every call returns one; details go to afht_last_error(). */
typedef enum afht_status {
  AFHT_OK = 0,
  AFHT_ERR_PARAMETER = 1,  /* bad argument, unknown key, malformed value */
  AFHT_ERR_VALIDATION = 2, /* bad data, I/O failure, geometry mismatch, split leakage */
  AFHT_ERR_NUMERIC = 3,    /* non-finite loss or activations */
  AFHT_ERR_INTERNAL = 4
} afht_status;

typedef struct afht_model afht_model;

/* Message of the last failed call on this thread ("" if none). */
AFHT_API const char* afht_last_error(void);
AFHT_API const char* afht_version(void);

/* Strings returned through `char**` outputs are owned by the caller. */
AFHT_API void afht_string_free(char* s);

/* Config text is the flat `key = value` format; `#` starts a comment. */
AFHT_API int afht_config_keys(const char* kind, char** out_lines); /* kind: "model", "train", "dataset" */

/* Writes frames/, manifest.jsonl and vocabulary.tsv under out_dir. */
AFHT_API int afht_generate_dataset(const char* out_dir, const char* config_text, char** out_summary_json);

/* Split report as JSON. Returns AFHT_ERR_VALIDATION when cases leak across
   splits; the report is still written. */
AFHT_API int afht_validate_manifest(const char* manifest_path, char** out_report_json);

/* Trains from model + train keys (an `ablation` key applies its preset).
   resume_path may be NULL; stop_at_step < 0 runs to the end. */
AFHT_API int afht_train(const char* manifest_path, const char* config_text, const char* out_dir,
                        const char* resume_path, int stop_at_step, char** out_summary_json);

AFHT_API int afht_model_load(const char* checkpoint_path, afht_model** out_model);
AFHT_API void afht_model_free(afht_model* model);
AFHT_API int afht_model_geometry(const afht_model* model, int* height, int* width);

/* Evaluates one split ("train", "val", "test"). options_text accepts tau,
   all_components, sigma_scale and min_sigma. Writes the per-row report to
   report_path (if not NULL) and returns the aggregate as JSON. */
AFHT_API int afht_evaluate(const afht_model* model, const char* manifest_path, const char* split,
                           const char* options_text, const char* report_path, char** out_aggregate_json);

/* Heatmap for frame `frame` of an AFVC clip. `out` must hold height*width
   values (row-major). */
AFHT_API int afht_predict(const afht_model* model, const char* clip_path, int frame, const char* surgery,
                          const char* tool, const char* action, double* out, size_t out_len);

/* Writes any of: raw grid, PGM heatmap, PPM overlay on the clip frame. */
AFHT_API int afht_write_prediction(const double* heatmap, int height, int width, const char* clip_path, int frame,
                                   const char* grid_path, const char* pgm_path, const char* overlay_path);

/* Table in the column order DICE, PCK@0.05, PCK@0.1, HD, ASSD built from
   saved reports. */
AFHT_API int afht_comparison_table(const char* const* names, const char* const* report_paths, int count,
                                   char** out_table);

#ifdef __cplusplus
}
#endif

#endif
