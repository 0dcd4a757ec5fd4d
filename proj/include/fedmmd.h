/* fedmmd — penalty-based personalized federated learning simulator with
 * adaptive MMD drift penalties.
 *
 * C API of the shared library. All functions return a fedmmd_status code;
 * on failure, fedmmd_last_error() returns a thread-local message describing
 * the problem. Strings returned through char** out-parameters are owned by
 * the caller and must be released with fedmmd_string_free().
 */
#ifndef FEDMMD_H
#define FEDMMD_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    FEDMMD_OK = 0,
    FEDMMD_ERR_INVALID_ARGUMENT = 1,
    FEDMMD_ERR_SHAPE = 2,
    FEDMMD_ERR_DOMAIN = 3,
    FEDMMD_ERR_CONFIG = 4,
    FEDMMD_ERR_NUMERIC = 5,
    FEDMMD_ERR_IO = 6,
    FEDMMD_ERR_INTERNAL = 7
} fedmmd_status;

const char* fedmmd_version(void);
const char* fedmmd_status_name(int status);

/* Message for the most recent failure on this thread; empty string if none. */
const char* fedmmd_last_error(void);

void fedmmd_string_free(char* s);

/* Generate a dataset directory (client_<k>.shard files, JSON sidecars, and
 * dataset.json) from a JSON spec:
 *   {"alpha":0.5,"beta":0.5,"clients":8,"samples_per_client":5000,
 *    "data_seed":7,"train_fraction":0.8,"dirichlet_alpha":null}
 * When "dirichlet_alpha" is a number, the generated samples are pooled and
 * re-partitioned across clients by Dirichlet label skew.
 */
int fedmmd_generate_dataset(const char* config_json, const char* out_dir);

/* Experiments. Configs are JSON documents validated against a strict schema
 * (unknown keys are rejected); see README for the format. */
typedef struct fedmmd_experiment fedmmd_experiment;

int fedmmd_experiment_from_file(const char* path, fedmmd_experiment** out);
int fedmmd_experiment_from_json(const char* json_text, fedmmd_experiment** out);

/* Override a config field before running, e.g. ("penalty.lambda", "0.1") or
 * ("seeds", "[2021,2022]"). The value is parsed as JSON when possible and
 * treated as a string otherwise. */
int fedmmd_experiment_override(fedmmd_experiment* e, const char* dotted_key, const char* value);

/* Run every configured seed; writes per-seed artifacts and summary.json under
 * out_dir (or the config's output directory when out_dir is NULL/empty).
 * When summary_json is non-NULL it receives the row summary. */
int fedmmd_experiment_run(fedmmd_experiment* e, const char* out_dir, int threads,
                          char** summary_json);

void fedmmd_experiment_free(fedmmd_experiment* e);

/* Run a sweep spec file: {"base": <config>, "grid": {"penalty.lambda": [...]}}.
 * Writes one row directory per grid point plus sweep_summary.{json,csv}. */
int fedmmd_sweep_run(const char* spec_path, const char* out_dir, int threads,
                     char** summary_json);

/* Emit paper-style tables (CSV) and plot data (JSON) from a results tree. */
int fedmmd_report_emit(const char* results_dir, const char* out_dir, int max_over_mu);

/* Estimator/QP/gradient oracle suites and core invariants. `full` selects the
 * acceptance-scale instance counts. Returns FEDMMD_OK only if all checks
 * pass; the report text is always produced. */
int fedmmd_self_check(int full, char** report_text);

#ifdef __cplusplus
}
#endif

#endif /* FEDMMD_H */
