/* C interface to the nphmm library. All functions return an nphmm_status;
 * on failure nphmm_last_error() describes the problem (per thread).
 * Strings returned through char** are owned by the caller and must be
 * released with nphmm_string_free. */
#ifndef NPHMM_H
#define NPHMM_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(NPHMM_BUILDING_LIBRARY)
#define NPHMM_API __attribute__((visibility("default")))
#else
#define NPHMM_API
#endif

typedef struct nphmm_dataset nphmm_dataset;
typedef struct nphmm_model nphmm_model;

typedef enum nphmm_status {
  NPHMM_OK = 0,
  NPHMM_ERR_INVALID_ARGUMENT = 1,
  NPHMM_ERR_DIMENSION_MISMATCH = 2,
  NPHMM_ERR_DEGENERATE_CHAIN = 3,
  NPHMM_ERR_IO = 4,
  NPHMM_ERR_PARSE = 5,
  NPHMM_ERR_VERSION_MISMATCH = 6,
  NPHMM_ERR_CORRUPT_FILE = 7,
  NPHMM_ERR_INIT_FAILURE = 8,
  NPHMM_ERR_FIT_FAILURE = 9,
  NPHMM_ERR_ALREADY_EXISTS = 10,
  NPHMM_ERR_INTERNAL = 11
} nphmm_status;

NPHMM_API const char* nphmm_version(void);
NPHMM_API const char* nphmm_last_error(void);
NPHMM_API const char* nphmm_status_name(nphmm_status status);
NPHMM_API void nphmm_string_free(char* s);

/* Worker count for parallel sections; 0 selects the machine parallelism. */
NPHMM_API nphmm_status nphmm_set_threads(int threads);

/* Datasets ---------------------------------------------------------------- */

/* schema_json: {"sequence_column", "observation_columns", "covariate_columns",
 * "interactions", "standardize", "category_column"}; NULL or missing
 * observation columns take every column not otherwise named. */
NPHMM_API nphmm_status nphmm_dataset_load_csv(const char* path, const char* schema_json, nphmm_dataset** out);
/* Applies the schema and standardization constants stored in the model. */
NPHMM_API nphmm_status nphmm_dataset_load_csv_for_model(const char* path, const nphmm_model* model,
                                                        nphmm_dataset** out);
NPHMM_API nphmm_status nphmm_dataset_info(const nphmm_dataset* data, int* n_sequences, int* dim,
                                          int* n_covariates, long* total_length);
NPHMM_API void nphmm_dataset_free(nphmm_dataset* data);

/* Models ------------------------------------------------------------------ */

/* config_json: {"model": {...}, "optimizer": {...}}. A non-NULL warm_start is
 * used as the single starting point instead of k-means. report_json may be NULL. */
NPHMM_API nphmm_status nphmm_fit(const nphmm_dataset* data, const char* config_json,
                                 const nphmm_model* warm_start, nphmm_model** out, char** report_json);

/* config_json: {"model", "optimizer", "cv"}. Writes the CV table as CSV and,
 * when selected is non-NULL, refits the chosen basis count on all data. */
NPHMM_API nphmm_status nphmm_cross_validate(const nphmm_dataset* data, const char* config_json,
                                            char** table_csv, nphmm_model** selected, char** report_json);

NPHMM_API nphmm_status nphmm_model_load(const char* path, nphmm_model** out);
NPHMM_API nphmm_status nphmm_model_save(const nphmm_model* model, const char* path, int force);
NPHMM_API nphmm_status nphmm_model_to_json(const nphmm_model* model, char** json);
NPHMM_API nphmm_status nphmm_model_info(const nphmm_model* model, int* n_states, int* dim, int* is_spline,
                                        int* has_covariates);
NPHMM_API void nphmm_model_free(nphmm_model* model);

NPHMM_API nphmm_status nphmm_log_likelihood(const nphmm_model* model, const nphmm_dataset* data, double* out);

/* CSV with columns sequence,t,state (both indices 1-based), one row per input row. */
NPHMM_API nphmm_status nphmm_decode(const nphmm_model* model, const nphmm_dataset* data, char** csv);

/* grid_json: {"points": n or [n1,..], "bounds": [[lo,hi],..]}. CSV with one
 * column per dimension plus "density". state is 0-based. */
NPHMM_API nphmm_status nphmm_export_density(const nphmm_model* model, const char* grid_json, int state,
                                            char** csv);

/* curve_json: {"covariate", "lo", "hi", "points", "fixed"}. CSV with the
 * covariate value and one stationary probability column per state. */
NPHMM_API nphmm_status nphmm_steady_state_curve(const nphmm_model* model, const char* curve_json, char** csv);

/* Simulation and studies -------------------------------------------------- */

/* Run run_index (0-based) of the scenario: observations CSV
 * (sequence,y1,..,yD) and true states CSV (sequence,t,state, 1-based). */
NPHMM_API nphmm_status nphmm_simulate(const char* scenario_json, int run_index, char** observations_csv,
                                      char** states_csv);

/* Any output pointer may be NULL. */
NPHMM_API nphmm_status nphmm_run_study(const char* study_json, char** fits_csv, char** summary_csv,
                                       char** cv_csv);

#ifdef __cplusplus
}
#endif

#endif
