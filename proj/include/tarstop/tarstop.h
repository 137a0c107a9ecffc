#ifndef TARSTOP_H
#define TARSTOP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(TARSTOP_BUILDING)
#define TARSTOP_API __declspec(dllexport)
#else
#define TARSTOP_API __declspec(dllimport)
#endif
#else
#define TARSTOP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tarstop_status {
  TARSTOP_OK = 0,
  TARSTOP_ERR_CONFIG = 1,
  TARSTOP_ERR_DATA = 2,
  TARSTOP_ERR_PARAMETER = 3,
  TARSTOP_ERR_DOMAIN = 4,
  TARSTOP_ERR_IO = 5,
  /* The quantity is undefined for these inputs (e.g. zero denominator). */
  TARSTOP_UNDEFINED = 6,
  TARSTOP_ERR_INTERNAL = 7
} tarstop_status;

/* Message for the last non-OK status on this thread; never NULL. */
TARSTOP_API const char* tarstop_last_error(void);
TARSTOP_API const char* tarstop_status_name(tarstop_status status);
TARSTOP_API const char* tarstop_version(void);

/* Receives library warnings; NULL restores the stderr default. */
typedef void (*tarstop_warning_fn)(const char* message, void* user);
TARSTOP_API void tarstop_set_warning_handler(tarstop_warning_fn fn, void* user);

TARSTOP_API void tarstop_string_free(char* s);

/* ---- estimator kernels ---- */

TARSTOP_API tarstop_status tarstop_hypergeometric_cdf(int64_t population, int64_t successes, int64_t draws,
                                                      int64_t k, double* out);

typedef struct tarstop_estimate {
  double point;
  double variance_bound;
  double raw_lower;
  double raw_upper;
  double ci_lower;
  double ci_upper;
  double r_hat;
  double u_hat;
} tarstop_estimate;

TARSTOP_API tarstop_status tarstop_quant_estimate(const double* reviewed, size_t reviewed_count,
                                                  const double* unreviewed, size_t unreviewed_count,
                                                  double multiplier, tarstop_estimate* out);

typedef struct tarstop_knee {
  int64_t knee;
  int64_t s;
  double rho;
} tarstop_knee;

/* Gain points as parallel arrays starting at (0, 0). */
TARSTOP_API tarstop_status tarstop_knee_point(const int64_t* reviewed, const int64_t* relevant, size_t count,
                                              int64_t s, tarstop_knee* out);

TARSTOP_API tarstop_status tarstop_pearson(const double* x, const double* y, size_t count, double* out);

/* Writes up to `capacity` sizes; *count receives the full schedule length. */
TARSTOP_API tarstop_status tarstop_knee_schedule(int64_t batch_size, int64_t min_s, int64_t limit, int64_t* out,
                                                 size_t capacity, size_t* count);

/* ---- corpora ---- */

typedef struct tarstop_corpus tarstop_corpus;

TARSTOP_API tarstop_status tarstop_corpus_load_svmlight(const char* path, int index_base, tarstop_corpus** out);
TARSTOP_API tarstop_status tarstop_corpus_synthesize(const char* category_id, double prevalence, double separation,
                                                     size_t doc_count, size_t vocabulary_size, uint64_t seed,
                                                     tarstop_corpus** out);
TARSTOP_API tarstop_status tarstop_corpus_save_svmlight(const tarstop_corpus* corpus, const char* path);
TARSTOP_API size_t tarstop_corpus_doc_count(const tarstop_corpus* corpus);
TARSTOP_API size_t tarstop_corpus_task_count(const tarstop_corpus* corpus);
/* Valid while the corpus lives; NULL when out of range. */
TARSTOP_API const char* tarstop_corpus_task_id(const tarstop_corpus* corpus, size_t index);
TARSTOP_API size_t tarstop_corpus_task_relevant(const tarstop_corpus* corpus, size_t index);
TARSTOP_API void tarstop_corpus_free(tarstop_corpus* corpus);

/* ---- trajectories ---- */

typedef struct tarstop_trajectory tarstop_trajectory;

/* Saturates term frequencies with k1 (skip when k1 <= 0), then runs the
 * relevance-feedback loop for one category. max_rounds 0 means until the
 * collection is exhausted. */
TARSTOP_API tarstop_status tarstop_simulate_run(const tarstop_corpus* corpus, const char* category_id, uint64_t seed,
                                                size_t batch_size, size_t max_rounds, double k1,
                                                tarstop_trajectory** out);
TARSTOP_API tarstop_status tarstop_trajectory_read(const char* path, tarstop_trajectory** out);
TARSTOP_API tarstop_status tarstop_trajectory_write(const tarstop_trajectory* trajectory, const char* path);
/* OK when the archive checks out; DATA with the reason otherwise. */
TARSTOP_API tarstop_status tarstop_trajectory_verify(const char* path);
TARSTOP_API size_t tarstop_trajectory_round_count(const tarstop_trajectory* trajectory);
TARSTOP_API tarstop_status tarstop_trajectory_round(const tarstop_trajectory* trajectory, size_t round,
                                                    size_t* reviewed, size_t* relevant);
TARSTOP_API void tarstop_trajectory_free(tarstop_trajectory* trajectory);

typedef enum tarstop_stop_reason {
  TARSTOP_STOP_THRESHOLD_MET = 0,
  TARSTOP_STOP_EXHAUSTED = 1,
  TARSTOP_STOP_NEVER = 2
} tarstop_stop_reason;

typedef struct tarstop_cost {
  int fired; /* 0 when the rule never fired; costs are then at the last round */
  size_t stop_round;
  tarstop_stop_reason reason;
  size_t reviewed;
  size_t penalty;
  size_t extra_sample_cost;
  size_t total_cost;
  double recall_at_stop;
  size_t optimal_cost;
  double cost_ratio;
  size_t min_total_cost;
  int flagged;
} tarstop_cost;

/* rule_json is one rule object, e.g. {"rule":"Knee"} or {"rule":"QuantCI"}. */
TARSTOP_API tarstop_status tarstop_trajectory_score(const tarstop_trajectory* trajectory, const char* rule_json,
                                                    double target, tarstop_cost* out);

/* ---- experiments ---- */

typedef struct tarstop_experiment tarstop_experiment;

TARSTOP_API tarstop_status tarstop_experiment_load(const char* config_path, tarstop_experiment** out);
/* base_dir resolves relative paths; may be NULL. */
TARSTOP_API tarstop_status tarstop_experiment_parse(const char* config_json, const char* base_dir,
                                                    tarstop_experiment** out);
TARSTOP_API tarstop_status tarstop_experiment_set_output_dir(tarstop_experiment* experiment, const char* dir);
TARSTOP_API const char* tarstop_experiment_output_dir(const tarstop_experiment* experiment);
/* Normalized config with every default spelled out; free with tarstop_string_free. */
TARSTOP_API tarstop_status tarstop_experiment_config_json(const tarstop_experiment* experiment, char** out);

typedef struct tarstop_simulate_summary {
  size_t runs;
  size_t computed;
  size_t reused;
} tarstop_simulate_summary;

TARSTOP_API tarstop_status tarstop_experiment_simulate(const tarstop_experiment* experiment, size_t workers,
                                                       int resume, int discard_corrupt,
                                                       tarstop_simulate_summary* out);
TARSTOP_API tarstop_status tarstop_experiment_evaluate(const tarstop_experiment* experiment, size_t workers,
                                                       size_t* records);
TARSTOP_API void tarstop_experiment_free(tarstop_experiment* experiment);

/* Reads results_dir, writes tables into report_dir. text_out (optional)
 * receives the human-readable report; free with tarstop_string_free. */
TARSTOP_API tarstop_status tarstop_report(const char* results_dir, const char* report_dir, char** text_out);

#ifdef __cplusplus
}
#endif

#endif
