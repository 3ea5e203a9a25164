/*
 * vflowopt C API.
 *
 * Every function returns a vfo_status. On failure the calling thread's last
 * error message is available from vfo_last_error() until the next call.
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function. Output arrays follow one convention: pass a buffer and
 * its capacity; *count always receives the required length, and
 * VFO_ERR_BUFFER is returned when the capacity is too small.
 */
#ifndef VFLOWOPT_H
#define VFLOWOPT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(VFLOWOPT_BUILDING)
#    define VFO_API __declspec(dllexport)
#  else
#    define VFO_API __declspec(dllimport)
#  endif
#else
#  define VFO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vfo_status {
  VFO_OK = 0,
  VFO_ERR_ARGUMENT = 1,
  VFO_ERR_SHAPE = 2,
  VFO_ERR_DECODE = 3,
  VFO_ERR_IO = 4,
  VFO_ERR_CONFIG = 5,
  VFO_ERR_INFEASIBLE = 6,
  VFO_ERR_NUMERIC = 7,
  VFO_ERR_BUFFER = 8,
  VFO_ERR_INTERNAL = 9
} vfo_status;

typedef struct vfo_layout {
  int32_t l1, l2, l3;
} vfo_layout;

typedef struct vfo_strategy {
  double r1, r2, r3;
  double t;
  double alpha;
  int32_t a;
} vfo_strategy;

typedef struct vfo_ablation {
  int32_t calibration; /* 0: mean received attention */
  int32_t merge;       /* 0: drop pruned tokens */
  int32_t progressive; /* 0: single pre-LM prune to the budget */
} vfo_ablation;

/* A strategy with the layout, budget and settings it belongs to. */
typedef struct vfo_strategy_record {
  vfo_strategy strategy;
  vfo_layout layout;
  double budget;
  double objective;
  uint64_t seed;
  vfo_ablation ablation;
} vfo_strategy_record;

typedef struct vfo_model_dims {
  int32_t hidden;
  int32_t ffn;
  int32_t heads;
  int32_t bytes_per_value; /* 2 or 4 */
} vfo_model_dims;

typedef struct vfo_cost_report {
  double budget;
  double flops_total;
  double flops_baseline;
  double kv_bytes_total;
  double kv_bytes_baseline;
  double flops_reduction;
  double kv_reduction;
} vfo_cost_report;

typedef enum vfo_token_list {
  VFO_LIST_RETAINED = 0,
  VFO_LIST_PRUNED = 1,
  VFO_LIST_MERGED = 2
} vfo_token_list;

typedef struct vfo_config vfo_config;
typedef struct vfo_session vfo_session;
typedef struct vfo_run vfo_run;
typedef struct vfo_prune_report vfo_prune_report;

VFO_API const char* vfo_version(void);
VFO_API const char* vfo_last_error(void);
VFO_API const char* vfo_status_name(vfo_status status);

/* ---- schedule ---------------------------------------------------------- */

VFO_API vfo_status vfo_average_retention(const vfo_strategy* s, vfo_layout layout,
                                         double* out);
/* VFO_ERR_INFEASIBLE when the derived r3 falls outside (0, 1]. */
VFO_API vfo_status vfo_solve_r3(double r1, double r2, vfo_layout layout, double budget,
                                double* r3);
VFO_API vfo_status vfo_stage_token_counts(size_t n_visual, const vfo_strategy* s,
                                          size_t counts[3]);

/* ---- images ------------------------------------------------------------ */

/* Entropy (nats) of every patch of a P5/P6 image, row-major patch order. */
VFO_API vfo_status vfo_entropy_file(const char* path, int32_t patch_size, double* values,
                                    size_t capacity, size_t* count, int32_t* grid_cols,
                                    int32_t* grid_rows);

/* ---- configuration ----------------------------------------------------- */

VFO_API vfo_status vfo_config_default(vfo_config** out);
VFO_API vfo_status vfo_config_load(const char* path, vfo_config** out);
VFO_API vfo_status vfo_config_set(vfo_config* cfg, const char* key, const char* value);
/* Current value of a key as text, written into buf (NUL-terminated). */
VFO_API vfo_status vfo_config_get(const vfo_config* cfg, const char* key, char* buf,
                                  size_t capacity, size_t* length);
VFO_API void vfo_config_free(vfo_config* cfg);

/* ---- sessions: toy model + workload built from a config ---------------- */

VFO_API vfo_status vfo_session_create(const vfo_config* cfg, vfo_session** out);
VFO_API void vfo_session_free(vfo_session* session);
VFO_API size_t vfo_session_sample_count(const vfo_session* session);
VFO_API int32_t vfo_session_lm_layers(const vfo_session* session);

/* Bayesian search over the configured space. ledger_path and resume_path
 * may be NULL. */
VFO_API vfo_status vfo_session_optimize(vfo_session* session, const char* ledger_path,
                                        const char* resume_path, vfo_run** out);

/* Per-sample cosine similarities of the final token and their sum. */
VFO_API vfo_status vfo_session_evaluate(vfo_session* session, const vfo_strategy_record* rec,
                                        double* sims, size_t capacity, size_t* count,
                                        double* total);

/* Mean text-position similarity per LM layer for one sample. */
VFO_API vfo_status vfo_session_flow(vfo_session* session, size_t sample,
                                    const vfo_strategy_record* rec, double* series,
                                    size_t capacity, size_t* count);

VFO_API vfo_status vfo_session_prune(vfo_session* session, size_t sample,
                                     const vfo_strategy_record* rec, vfo_prune_report** out);

/* Writes a trace bundle for one sample; rec == NULL records the unpruned run. */
VFO_API vfo_status vfo_session_record_trace(vfo_session* session, size_t sample,
                                            const vfo_strategy_record* rec, const char* dir);

/* ---- optimization runs ------------------------------------------------- */

VFO_API size_t vfo_run_size(const vfo_run* run);
VFO_API vfo_status vfo_run_observation(const vfo_run* run, size_t index, vfo_strategy* s,
                                       double* y);
VFO_API vfo_status vfo_run_incumbent(const vfo_run* run, vfo_strategy_record* rec,
                                     size_t* index);
VFO_API void vfo_run_free(vfo_run* run);

/* ---- strategy files ---------------------------------------------------- */

VFO_API vfo_status vfo_strategy_write(const char* path, const vfo_strategy_record* rec);
/* Re-validates feasibility under the recorded layout and budget. */
VFO_API vfo_status vfo_strategy_read(const char* path, vfo_strategy_record* rec);

/* ---- traces ------------------------------------------------------------ */

/* Prune report from a recorded bundle. Patch entropy comes from the bundle
 * when present, otherwise from image_path (may be NULL). */
VFO_API vfo_status vfo_trace_prune(const char* trace_dir, const char* image_path,
                                   int32_t patch_size, const vfo_strategy_record* rec,
                                   vfo_prune_report** out);

/* Objective over sample_* directories each holding full/ and pruned/ bundles. */
VFO_API vfo_status vfo_trace_objective(const char* dir, double* sims, size_t capacity,
                                       size_t* count, double* total);

/* ---- prune reports ----------------------------------------------------- */

VFO_API vfo_status vfo_prune_report_importance(const vfo_prune_report* r, double* scores,
                                               size_t capacity, size_t* count);
/* stage is 0, 1 or 2. Position ids ascend. */
VFO_API vfo_status vfo_prune_report_list(const vfo_prune_report* r, int32_t stage,
                                         vfo_token_list list, int64_t* ids, size_t capacity,
                                         size_t* count);
VFO_API void vfo_prune_report_free(vfo_prune_report* r);

/* ---- cost model -------------------------------------------------------- */

/* merged_counts may be NULL (no fused tokens). */
VFO_API vfo_status vfo_pipeline_costs(int64_t n_visual, int64_t n_text,
                                      const vfo_strategy_record* rec, vfo_model_dims dims,
                                      const int64_t* merged_counts, vfo_cost_report* out);
VFO_API vfo_status vfo_cost_csv_header(char* buf, size_t capacity, size_t* length);
VFO_API vfo_status vfo_cost_csv_row(const vfo_cost_report* report, char* buf, size_t capacity,
                                    size_t* length);

#ifdef __cplusplus
}
#endif

#endif /* VFLOWOPT_H */
