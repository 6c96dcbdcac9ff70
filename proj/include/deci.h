/* C interface to the deci library: datasets, training, causal queries and
 * evaluation behind opaque handles. All functions return DECI_OK on success;
 * on failure they return an error code and set a thread-local message
 * readable via deci_last_error(). Strings returned through char** outputs
 * are heap-allocated JSON and must be released with deci_string_free(). */
#ifndef DECI_H
#define DECI_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum deci_status {
  DECI_OK = 0,
  DECI_ERR_INVALID = 1, /* bad arguments, unknown names, malformed JSON */
  DECI_ERR_IO = 2,      /* unreadable or unwritable files */
  DECI_ERR_RUNTIME = 3  /* numerical or internal failures */
} deci_status;

typedef struct deci_dataset deci_dataset;
typedef struct deci_model deci_model;

const char* deci_version(void);
const char* deci_last_error(void);
deci_status deci_set_threads(int n);
void deci_string_free(char* s);

/* spec_json, one of:
 *   {"csuite": "<name>"}
 *   {"family": "er"|"sf", "d": 16, "e": 64,
 *    "noise": "gaussian"|"mlp", "n": 5000, "missing_rate": 0.0}
 * Generated datasets carry their true graph and ground-truth test cases. */
deci_status deci_dataset_generate(const char* spec_json, uint64_t seed,
                                  deci_dataset** out);
deci_status deci_dataset_load(const char* dir, deci_dataset** out);
deci_status deci_dataset_save(const deci_dataset* data, const char* dir);
/* {"n":, "d":, "variables":[...], "has_graph":, "cases":[...]} */
deci_status deci_dataset_info(const deci_dataset* data, char** json_out);
void deci_dataset_free(deci_dataset* data);

/* config_json: flat object of training options; unknown keys are rejected.
 * Keys (defaults): noise ("gaussian"|"spline"), lambda_s (5.0),
 * temperature (0.25), inner_max_steps (6000), inner_patience (1500),
 * graph_lr_scale (0.1; step-size multiplier for the posterior logits),
 * lr (0.01), lr_patience (500), max_lr_decays (2), outer_max_steps (100),
 * progress_ratio (0.65), rho_multiplier (10.0), penalty_cap (1e13),
 * batch_size (0 = auto), penalty_samples (100), dag_tolerance (1e-4),
 * embed_dim (0 = node count), hidden_dim (128), latent_dim (128),
 * clamp_to_true_graph (false; pins the posterior to the dataset's graph and
 * trains only the structural model).
 * diag_path may be NULL or a JSONL file receiving per-epoch diagnostics.
 * Returns DECI_ERR_RUNTIME if the optimizer diverged; a model whose
 * posterior did not reach the DAG tolerance is still returned, with
 * "dag_converged": false in deci_model_info. */
deci_status deci_train(const deci_dataset* data, const char* config_json,
                       uint64_t seed, const char* diag_path,
                       deci_model** out);
deci_status deci_model_save(const deci_model* model, const char* path);
deci_status deci_model_load(const char* path, deci_model** out);
deci_status deci_model_info(const deci_model* model, char** json_out);
void deci_model_free(deci_model* model);

/* Replaces the graph posterior with one concentrated on the dataset's true
 * graph (requires a dataset carrying graph.csv). */
deci_status deci_model_clamp_graph(deci_model* model,
                                   const deci_dataset* data);

/* {"edge_probabilities": [[...]], "mode": [[...]], "mode_is_dag": bool,
 *  "samples": [[[...]]], "cyclic_rejected": int} */
deci_status deci_graph_report(const deci_model* model, int n_samples,
                              uint64_t seed, char** json_out);

/* query_json references variables by name:
 *   {"treatment": {"x1": 1.0}, "reference": {"x1": 0.0},
 *    "targets": ["x2"], "condition": {"x3": 0.5}}
 * condition is optional for ATE and required non-empty for CATE. */
deci_status deci_ate(const deci_model* model, const char* query_json,
                     uint64_t seed, char** json_out);
deci_status deci_cate(const deci_model* model, const char* query_json,
                      uint64_t seed, char** json_out);

/* Discovery metrics against the dataset's graph.csv and ATE RMSE against its
 * stored test cases; missing ground-truth files yield a partial report with
 * warnings. graph_csv may replace the model as the prediction source
 * (exactly one of model / graph_csv must be given). */
deci_status deci_eval(const deci_model* model, const char* graph_csv,
                      const deci_dataset* data, uint64_t seed,
                      char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* DECI_H */
