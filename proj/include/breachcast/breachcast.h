/* C interface to the breachcast library.
 *
 * Every object is an opaque handle released by its matching *_free function;
 * *_free accepts NULL. Functions that can fail return a bc_status; on failure
 * bc_last_error() describes the problem for the calling thread until the next
 * failing call on that thread. Output pointers are only written on success.
 */
#ifndef BREACHCAST_H
#define BREACHCAST_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(BREACHCAST_BUILDING)
#define BC_API __attribute__((visibility("default")))
#else
#define BC_API
#endif

typedef enum bc_status {
    BC_OK = 0,
    BC_ERR_DOMAIN = 1,
    BC_ERR_NUMERICAL = 2,
    BC_ERR_PARSE = 3,
    BC_ERR_VALIDATION = 4,
    BC_ERR_CONFIG = 5,
    BC_ERR_SCHEMA = 6,
    BC_ERR_IO = 7,
    BC_ERR_NULL_ARGUMENT = 8,
    BC_ERR_INTERNAL = 9
} bc_status;

typedef enum bc_residual_model { BC_RESIDUAL_GAUSSIAN = 0, BC_RESIDUAL_ZERO_NOISE = 1 } bc_residual_model;

typedef enum bc_component { BC_COMPONENT_OVERALL = 0, BC_COMPONENT_PEAK = 1, BC_COMPONENT_WIDTH = 2 } bc_component;

BC_API const char* bc_version(void);
BC_API const char* bc_last_error(void);
BC_API const char* bc_status_name(bc_status status);
/* Number of flat parameters for a residual model: 6 gaussian, 4 zero-noise. */
BC_API size_t bc_parameter_count(bc_residual_model model);
/* Name of parameter `index`, or NULL when out of range. */
BC_API const char* bc_parameter_name(bc_residual_model model, size_t index);

/* ---- Forward model ---------------------------------------------------- */

typedef struct bc_case {
    double dam_height;          /* m */
    double crest_width;         /* m */
    double embankment_slope;    /* - */
    double side_angle_deg;      /* deg */
    double basin_exponent;      /* - */
    double level_drop;          /* m */
    double released_volume;     /* m^3 */
    double final_height;        /* m */
    double initial_depth_ratio; /* - */
} bc_case;

typedef struct bc_erosion {
    double scaling;
    double velocity_exponent;
    double radius_exponent;
} bc_erosion;

typedef struct bc_hydrograph_summary {
    double peak_discharge; /* m^3/s */
    double final_width;    /* m */
    double time_to_peak;   /* s */
    double duration;       /* s */
    double switch_time;    /* s, negative when the foundation was never reached */
    int total_failure;
    int horizon_reached;
    size_t samples;
} bc_hydrograph_summary;

/* time [s], discharge [m^3/s], top width [m], bottom level [m], reservoir level [m] */
typedef struct bc_sample {
    double time;
    double discharge;
    double top_width;
    double bottom_level;
    double reservoir_level;
} bc_sample;

typedef struct bc_hydrograph bc_hydrograph;

BC_API bc_status bc_simulate(const bc_case* dam_case, const bc_erosion* erosion, bc_hydrograph** out);
BC_API bc_status bc_hydrograph_summary_get(const bc_hydrograph* h, bc_hydrograph_summary* out);
BC_API bc_status bc_hydrograph_sample(const bc_hydrograph* h, size_t index, bc_sample* out);
BC_API bc_status bc_hydrograph_write_csv(const bc_hydrograph* h, const char* path);
BC_API void bc_hydrograph_free(bc_hydrograph* h);

/* ---- Dataset ---------------------------------------------------------- */

typedef struct bc_dataset bc_dataset;

BC_API bc_status bc_dataset_load(const char* path, bc_dataset** out);
BC_API size_t bc_dataset_size(const bc_dataset* ds);
BC_API const char* bc_dataset_name(const bc_dataset* ds, size_t index);
/* 1 when record `index` carries an observed final width. */
BC_API int bc_dataset_has_width(const bc_dataset* ds, size_t index);
BC_API bc_status bc_dataset_write(const bc_dataset* ds, const char* path);
BC_API void bc_dataset_free(bc_dataset* ds);

/* Unnormalised log posterior of `params` (flat layout of `model`). */
BC_API bc_status bc_log_posterior(const bc_dataset* ds, bc_residual_model model, const double* params, size_t count,
                                  uint64_t seed, size_t max_draws, unsigned threads, double* out);

/* ---- Calibration ------------------------------------------------------ */

typedef struct bc_calibration_config {
    bc_residual_model model;
    size_t chains;
    size_t iterations;
    uint64_t seed;
    unsigned threads;
    size_t initial_draws;
    size_t max_draws;
    double target_precision;
    double min_effective_samples; /* 0 disables the stopping rule */
    double jump_scale;            /* <= 0 selects 2.38 / sqrt(2 d) */
    const char* archive_path;     /* checkpoint file; an existing archive is resumed. May be NULL. */
} bc_calibration_config;

typedef struct bc_archive bc_archive;

BC_API void bc_calibration_config_default(bc_calibration_config* config);
/* Applies the keys present in a JSON run configuration file on top of `config`.
 * The file is validated completely before anything is written. */
BC_API bc_status bc_calibration_config_load(const char* path, bc_calibration_config* config);
BC_API bc_status bc_calibrate(const bc_dataset* ds, const bc_calibration_config* config, bc_archive** out);
BC_API bc_status bc_archive_load(const char* path, bc_archive** out);
BC_API bc_status bc_archive_write(const bc_archive* a, const char* path);
BC_API size_t bc_archive_chains(const bc_archive* a);
BC_API size_t bc_archive_generations(const bc_archive* a);
BC_API size_t bc_archive_dimension(const bc_archive* a);
BC_API double bc_archive_jump_scale(const bc_archive* a);
BC_API double bc_archive_elapsed_seconds(const bc_archive* a);
BC_API void bc_archive_free(bc_archive* a);

/* ---- Diagnostics ------------------------------------------------------ */

typedef struct bc_diagnostics_summary {
    size_t burn_in;
    int converged;
    size_t analysis_start;
    size_t thinning_lag;
    double acceptance_rate;
    double final_multivariate_psrf;
} bc_diagnostics_summary;

typedef struct bc_diagnostics bc_diagnostics;

BC_API bc_status bc_diagnose(const bc_archive* a, double threshold, bc_diagnostics** out);
BC_API bc_status bc_diagnostics_summary_get(const bc_diagnostics* d, bc_diagnostics_summary* out);
/* Writes one effective sample count per parameter; `count` must equal the dimension. */
BC_API bc_status bc_diagnostics_effective_samples(const bc_diagnostics* d, double* out, size_t count);
BC_API bc_status bc_diagnostics_write_json(const bc_diagnostics* d, const char* path);
BC_API void bc_diagnostics_free(bc_diagnostics* d);

/* ---- Posterior samples ------------------------------------------------ */

typedef struct bc_posterior bc_posterior;

/* Thinned draws after the diagnosed burn-in. */
BC_API bc_status bc_posterior_from_archive(const bc_archive* a, const bc_diagnostics* d, bc_posterior** out);
BC_API bc_status bc_posterior_load(const char* path, bc_posterior** out);
BC_API bc_status bc_posterior_write(const bc_posterior* p, const char* path);
BC_API size_t bc_posterior_size(const bc_posterior* p);
BC_API bc_residual_model bc_posterior_model(const bc_posterior* p);
/* Highest-posterior draw and bootstrap standard errors; arrays hold `count` entries. */
BC_API bc_status bc_posterior_mode(const bc_posterior* p, size_t resamples, uint64_t seed, double* values,
                                   double* standard_errors, size_t count);
BC_API bc_status bc_posterior_correlation(const bc_posterior* p, size_t first, size_t second, double* out);
BC_API void bc_posterior_free(bc_posterior* p);

/* ---- Goodness of fit -------------------------------------------------- */

typedef struct bc_gof_summary {
    double mean_residual;
    double mean_residual_error;
    double interval95;
    double interval95_error;
} bc_gof_summary;

typedef struct bc_gof bc_gof;

BC_API bc_status bc_gof_run(const bc_dataset* ds, bc_residual_model model, const double* params, size_t count,
                            uint64_t seed, size_t replications, unsigned threads, bc_gof** out);
BC_API bc_status bc_gof_summary_get(const bc_gof* g, bc_component component, size_t resamples, uint64_t seed,
                                    bc_gof_summary* out);
BC_API bc_status bc_gof_residual_correlation(const bc_gof* g, double* out);
BC_API bc_status bc_gof_write(const bc_gof* g, const char* dir, size_t resamples, uint64_t seed);
BC_API void bc_gof_free(bc_gof* g);

/* ---- Prediction ------------------------------------------------------- */

typedef struct bc_prediction_case bc_prediction_case;
typedef struct bc_ensemble bc_ensemble;

typedef struct bc_ensemble_summary {
    size_t members;
    size_t failed;
    size_t total_failures;
    size_t partial_failures;
    size_t wider_than_dam;
    double max_total_time_to_peak; /* s, 0 without total failures */
    double min_partial_duration;   /* s, negative without partial failures */
} bc_ensemble_summary;

typedef struct bc_member {
    int ok;
    int total_failure;
    int wider_than_dam;
    double peak_discharge;
    double final_width;
    double time_to_peak;
    double duration;
    double scaling;
} bc_member;

BC_API bc_status bc_prediction_case_load(const char* path, bc_prediction_case** out);
/* Replaces the transport law point estimate. */
BC_API bc_status bc_prediction_case_set_erosion(bc_prediction_case* c, double gamma_location, double gamma_scale,
                                                double velocity_exponent, double radius_exponent);
/* Members draw their transport law from the posterior samples instead of the point estimate. */
BC_API bc_status bc_prediction_case_use_posterior(bc_prediction_case* c, const bc_posterior* p);
BC_API void bc_prediction_case_free(bc_prediction_case* c);

BC_API bc_status bc_predict(const bc_prediction_case* c, size_t members, uint64_t seed, unsigned threads,
                            bc_ensemble** out);
BC_API bc_status bc_ensemble_summary_get(const bc_ensemble* e, bc_ensemble_summary* out);
BC_API bc_status bc_ensemble_member(const bc_ensemble* e, size_t index, bc_member* out);
BC_API bc_status bc_ensemble_write(const bc_ensemble* e, const char* dir);
BC_API void bc_ensemble_free(bc_ensemble* e);

/* ---- Report ----------------------------------------------------------- */

/* Writes the median transport law into `buffer` (NUL-terminated). `required`
 * receives the needed size including the terminator; a short buffer yields
 * BC_ERR_DOMAIN with nothing written. */
BC_API bc_status bc_transport_formula(double gamma_location, double velocity_exponent, double radius_exponent,
                                      char* buffer, size_t size, size_t* required);

#ifdef __cplusplus
}
#endif

#endif /* BREACHCAST_H */
