/*
 * semstab - semantic stability evaluation library.
 *
 * C API over the C++ core: opaque handles, integer status codes, UTF-8 JSON
 * strings for structured payloads. Every char* returned through an out
 * parameter is heap-allocated and must be released with semstab_free().
 * Errors set a thread-local message readable via semstab_last_error().
 */
#ifndef SEMSTAB_H
#define SEMSTAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(SEMSTAB_BUILDING_SHARED)
#define SEMSTAB_API __attribute__((visibility("default")))
#else
#define SEMSTAB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum semstab_rc {
  SEMSTAB_OK = 0,
  SEMSTAB_E_USAGE = 1,    /* invalid arguments to an API call */
  SEMSTAB_E_CONFIG = 2,   /* config, dataset or spec errors */
  SEMSTAB_E_ENDPOINT = 3, /* endpoint failure or determinism-audit failure */
  SEMSTAB_E_ABORTED = 4,  /* run aborted by failure policy */
  SEMSTAB_E_IO = 5,
  SEMSTAB_E_INTERNAL = 6
} semstab_rc;

typedef enum semstab_risk {
  SEMSTAB_RISK_INSUFFICIENT = 0,
  SEMSTAB_RISK_LIMITED = 1,
  SEMSTAB_RISK_SUBSTANTIAL = 2,
  SEMSTAB_RISK_HIGH = 3
} semstab_risk;

SEMSTAB_API const char* semstab_version(void);
SEMSTAB_API const char* semstab_schema_version(void);

/* Thread-local message for the most recent failing call; empty when the last
 * call succeeded. */
SEMSTAB_API const char* semstab_last_error(void);

SEMSTAB_API void semstab_free(char* s);

/* ---- metrics ------------------------------------------------------- */

typedef struct semstab_pc {
  double value;       /* mode_count / k */
  int64_t mode_count; /* largest multiplicity among the k answers */
  int64_t k;
  int tie; /* 1 when several answers share the max multiplicity */
} semstab_pc;

/* answers: k canonical answer strings (k >= 2). mode_answer_out may be NULL. */
SEMSTAB_API semstab_rc semstab_compute_pc(const char* const* answers, int64_t k, semstab_pc* out,
                                          char** mode_answer_out);

typedef struct semstab_summary {
  double ss;
  int64_t n;
  int64_t k;
  double frac_pc_below_half;  /* strict PC < 0.5 */
  double frac_pc_at_least_08; /* inclusive PC >= 0.8 */
  int risk_level;             /* semstab_risk */
} semstab_summary;

/* mode_counts: per-prompt mode counts, all over the same k. */
SEMSTAB_API semstab_rc semstab_summarize(const int64_t* mode_counts, int64_t n, int64_t k,
                                         semstab_summary* out);

SEMSTAB_API semstab_rc semstab_classify_risk(double ss, int* out_level);
SEMSTAB_API const char* semstab_risk_name(int level);

/* ---- canonicalization ---------------------------------------------- */

SEMSTAB_API semstab_rc semstab_canonicalize(const char* raw, char** out);

/* extractor_json: {"kind":"full_text"|"numeric_final"|"mc_letter"|"regex_capture",
 *                  "pattern": "..."}  (pattern for regex_capture only) */
SEMSTAB_API semstab_rc semstab_extract_answer(const char* raw, const char* extractor_json, char** out);

/* ---- protocol runs -------------------------------------------------- */

typedef struct semstab_run semstab_run;

/* Opens (or reopens) a run directory for the given config. run_dir may be
 * NULL to use runs/<run_id> relative to the working directory. */
SEMSTAB_API semstab_rc semstab_run_open(const char* config_path, const char* run_dir,
                                        semstab_run** out);
SEMSTAB_API semstab_rc semstab_run_open_json(const char* config_json, const char* base_dir,
                                             const char* run_dir, semstab_run** out);

/* Executes the five-step protocol; resumable and idempotent. */
SEMSTAB_API semstab_rc semstab_run_execute(semstab_run* run);

/* Determinism audit without executing the protocol. */
SEMSTAB_API semstab_rc semstab_run_audit(semstab_run* run, char** report_json);

/* After a successful execute: summary -> {"summary":{...},"accuracy_pairing":{...},
 * "failed_prompts":n,"no_answer_responses":n,"row":"..."} */
SEMSTAB_API semstab_rc semstab_run_summary_json(semstab_run* run, char** out_json);
SEMSTAB_API semstab_rc semstab_run_report(semstab_run* run, char** markdown_out, char** json_out);
SEMSTAB_API const char* semstab_run_dir(const semstab_run* run);

SEMSTAB_API void semstab_run_close(semstab_run* run);

/* ---- reporting ------------------------------------------------------ */

/* points_json: [{"label","sparsity_pct","ss","ppl"?}]; bands_json may be NULL
 * for the default regime bands. */
SEMSTAB_API semstab_rc semstab_sweep_emit(const char* points_json, const char* bands_json,
                                          char** table_md_out, char** csv_out, char** json_out);
SEMSTAB_API semstab_rc semstab_sweep_parse_csv(const char* csv_text, char** points_json_out);

/* inputs_json: the report JSON shape (template_row, risk, accuracy_pairing,
 * counts, manifest). */
SEMSTAB_API semstab_rc semstab_report_emit(const char* inputs_json, char** markdown_out,
                                           char** json_out);

/* ---- synthetic laboratory ------------------------------------------- */

typedef struct semstab_model semstab_model;

SEMSTAB_API semstab_rc semstab_model_open_json(const char* model_json, semstab_model** out);
SEMSTAB_API semstab_rc semstab_model_open(const char* path, semstab_model** out);
SEMSTAB_API semstab_rc semstab_model_expected_pc(semstab_model* model, int k, double* out);
SEMSTAB_API semstab_rc semstab_model_expected_pc_mc(semstab_model* model, int k, int64_t trials,
                                                    uint64_t seed, double* estimate_out,
                                                    double* standard_error_out);
/* out: bias_sq, variance, total = bias_sq + variance */
SEMSTAB_API semstab_rc semstab_model_decompose(semstab_model* model, double* bias_sq_out,
                                               double* variance_out, double* total_out);
/* terms_out[3] = {student bias_sq, student variance, teacher variance} */
SEMSTAB_API semstab_rc semstab_student_condition(semstab_model* student, semstab_model* teacher,
                                                 int* holds_out, double* terms_out);
/* schedule_json: {"stages":[{"label","sparsity_pct","spread_multiplier","bias_increment"}]} */
SEMSTAB_API semstab_rc semstab_simulate_phase_curve(semstab_model* base, const char* schedule_json,
                                                    int k, char** points_json_out);
SEMSTAB_API void semstab_model_close(semstab_model* model);

/* ---- mock inference server ------------------------------------------ */

typedef struct semstab_mock semstab_mock;

/* script_json: {"mappings":[{"prompt"|"pattern","response"}],"default_response",
 * "jitter","delay_ms"}. port 0 picks a free port. */
SEMSTAB_API semstab_rc semstab_mock_start(const char* script_json, int port, semstab_mock** out);
SEMSTAB_API int semstab_mock_port(const semstab_mock* mock);
SEMSTAB_API semstab_rc semstab_mock_params_log(semstab_mock* mock, char** json_out);
/* Stops the server and frees the handle. */
SEMSTAB_API semstab_rc semstab_mock_stop(semstab_mock* mock);

/* ---- paraphrase ------------------------------------------------------ */

/* provider_json: the run-config "paraphrase" section. Only template providers
 * are supported standalone (file/llm need a dataset or an endpoint). */
SEMSTAB_API semstab_rc semstab_paraphrase_generate(const char* provider_json, const char* prompt,
                                                   int k, char** set_json_out);
SEMSTAB_API semstab_rc semstab_paraphrase_validate(const char* set_json, char** warnings_json_out);

/* Freezes paraphrase sets for every row of a JSONL dataset; returns JSON
 * Lines, one {"id", "prompt", "variants", ...} object per row. */
SEMSTAB_API semstab_rc semstab_paraphrase_dataset(const char* provider_json, const char* dataset_path,
                                                  int k, char** jsonl_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SEMSTAB_H */
