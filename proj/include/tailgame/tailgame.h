/* tailgame: long-tail multi-label learning as a cooperative potential game.
 *
 * C API over the C++ core. All objects are opaque handles owned by the
 * library; every function returns a tg_status, with outputs through pointers.
 * On any non-TG_OK status, tg_last_error() describes the failure for the
 * calling thread. Strings returned through char** outputs are heap-allocated
 * and must be released with tg_string_free().
 */
#ifndef TAILGAME_TAILGAME_H
#define TAILGAME_TAILGAME_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tg_status {
    TG_OK = 0,
    TG_ERR_INVALID_ARG = 1, /* bad handle/pointer or out-of-range parameter */
    TG_ERR_CONFIG = 2,      /* inconsistent configuration */
    TG_ERR_PARSE = 3,       /* malformed input text */
    TG_ERR_IO = 4,          /* file not readable/writable */
    TG_ERR_DATA = 5,        /* structurally invalid data for the operation */
    TG_ERR_NUMERIC = 6,     /* non-finite objective or undefined metric */
    TG_ERR_INTERNAL = 7
} tg_status;

typedef enum tg_backbone { TG_BACKBONE_IDENTITY = 0, TG_BACKBONE_MLP1 = 1 } tg_backbone;
typedef enum tg_step_rule { TG_STEP_FIXED = 0, TG_STEP_ARMIJO = 1, TG_STEP_ADAM = 2 } tg_step_rule;
typedef enum tg_weight_scheme {
    TG_WEIGHTS_UNIFORM = 0,
    TG_WEIGHTS_INVERSE_FREQUENCY = 1
} tg_weight_scheme;

typedef struct tg_dataset tg_dataset;
typedef struct tg_partition tg_partition;
typedef struct tg_model tg_model;

const char* tg_version(void);
const char* tg_status_name(tg_status s);
/* last error message of the calling thread; empty string when none */
const char* tg_last_error(void);
void tg_string_free(char* s);

/* ---- datasets (multilabel svmlight text format) ---- */

/* declared_labels / declared_features < 0 infer the dimensions from the data */
tg_status tg_dataset_read(const char* path, int declared_labels, int declared_features,
                          tg_dataset** out);
tg_status tg_dataset_parse(const char* text, size_t len, int declared_labels,
                           int declared_features, tg_dataset** out);
tg_status tg_dataset_write(const tg_dataset* ds, const char* path);
void tg_dataset_free(tg_dataset* ds);

tg_status tg_dataset_dims(const tg_dataset* ds, int* num_instances, int* num_features,
                          int* num_labels);

/* power-law synthetic long-tail generator; deterministic per seed */
tg_status tg_dataset_generate(int num_labels, int num_instances, int num_features,
                              double exponent, uint64_t seed, tg_dataset** out);

/* flips floor(severity * P_l) positives of each bottom-q label to negative;
 * achieved_ratios (length num_labels, may be NULL) receives the realized
 * per-label down-sampling ratios */
tg_status tg_dataset_make_rare(const tg_dataset* ds, double severity, double tail_fraction,
                               uint64_t seed, tg_dataset** out, double* achieved_ratios);

/* every positive entry flips to 0 independently with probability rho */
tg_status tg_dataset_flip_noise(const tg_dataset* ds, double rho, uint64_t seed,
                                tg_dataset** out);

/* label,freq,count rows for every label */
tg_status tg_dataset_stats_csv(const tg_dataset* ds, const char* path);

/* ---- partitions ---- */

tg_status tg_partition_build(const tg_dataset* ds, int num_players, double rho,
                             double tail_fraction, uint64_t seed, tg_partition** out);
tg_status tg_partition_read(const char* path, tg_partition** out);
tg_status tg_partition_write(const tg_partition* p, const char* path);
void tg_partition_free(tg_partition* p);
tg_status tg_partition_info(const tg_partition* p, int* num_players, int* num_labels,
                            double* coverage_factor);

/* ---- training ---- */

typedef struct tg_train_opts {
    long sweeps;
    int batch_size; /* 0 = full batch */
    double eta_head;
    double eta_fusion; /* backbone/fusion block step size */
    int step_rule;     /* tg_step_rule */
    double armijo_c;
    double armijo_shrink;
    int armijo_max_tries;
    double grad_clip_norm; /* <= 0 disables */
    double alpha;
    double beta_max;
    double warmup_fraction;
    double ema_decay;
    double eps;
    uint64_t seed;
    int inner_iters;
    int payoff_scheme; /* tg_weight_scheme */
    int stale_payoff;  /* player steps see the batch payoff as a constant */
    long snapshot_every;
    double tau_eval;
    double tail_fraction;
    int backbone; /* tg_backbone */
    int hidden_dim;
} tg_train_opts;

void tg_train_opts_init(tg_train_opts* opts);

/* Runs training and returns the final model. val may be NULL; telemetry_csv,
 * when non-NULL, receives one row per sweep. snapshot_dir, when non-NULL and
 * snapshot_every > 0, receives checkpoint_<sweep>.txt files. resume_from,
 * when non-NULL, continues from that model instead of a fresh init. */
tg_status tg_train(const tg_dataset* train, const tg_partition* partition,
                   const tg_train_opts* opts, const tg_dataset* val,
                   const tg_model* resume_from, const char* telemetry_csv,
                   const char* snapshot_dir, tg_model** out);

/* ---- models ---- */

tg_status tg_model_read(const char* path, tg_model** out);
tg_status tg_model_write(const tg_model* m, const char* path);
void tg_model_free(tg_model* m);
tg_status tg_model_dims(const tg_model* m, int* num_players, int* num_features,
                        int* num_labels);

/* fused clipped probabilities, row-major num_instances x num_labels */
tg_status tg_model_predict(const tg_model* m, const tg_dataset* ds, double* probs,
                           size_t probs_len);

/* per-label thresholds maximizing validation F1; stored inside the model */
tg_status tg_model_tune_thresholds(tg_model* m, const tg_dataset* val);

/* ---- reports (JSON strings, free with tg_string_free) ---- */

/* use_tuned_thresholds != 0 requires tuned thresholds stored in the model */
tg_status tg_evaluate_json(const tg_model* m, const tg_dataset* eval, double tau,
                           int use_tuned_thresholds, char** json);

/* Rare-F1 lower-bound certificate at threshold tau */
tg_status tg_certificate_json(const tg_model* m, const tg_dataset* eval, double tau,
                              char** json);

/* per-player specialization diagnostics over multi-player labels */
tg_status tg_diagnose_json(const tg_model* m, const tg_dataset* eval, double tau,
                           char** json);

/* analytic-vs-finite-difference gradient report on a seeded random setup */
tg_status tg_gradcheck_json(uint64_t seed, int num_labels, int num_instances,
                            int num_features, int num_players, double rho, int backbone,
                            double alpha, double beta, double h, double tol, char** json);

#ifdef __cplusplus
}
#endif

#endif /* TAILGAME_TAILGAME_H */
