/* C interface to the yieldcast library.
 *
 * All functions that can fail return a yc_status and record a message on the
 * context, retrievable with yc_last_error until the next call on that context.
 * A context must not be used from two threads at once; separate contexts are
 * independent.
 */
#ifndef YIELDCAST_YIELDCAST_H
#define YIELDCAST_YIELDCAST_H

#include <stddef.h>

#if defined(YC_BUILDING_LIBRARY)
#define YC_API __attribute__((visibility("default")))
#else
#define YC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum yc_status {
    YC_OK = 0,
    YC_ERR_INTERNAL = 1,
    YC_ERR_VALIDATION = 2,
    YC_ERR_NUMERICAL = 3
} yc_status;

typedef struct yc_context yc_context;
typedef struct yc_config yc_config;
typedef struct yc_raster yc_raster;

YC_API const char* yc_version(void);

YC_API yc_context* yc_context_new(void);
YC_API void yc_context_free(yc_context* ctx);
/* Message of the last failure on ctx; empty string after a success. */
YC_API const char* yc_last_error(const yc_context* ctx);

/* Configuration: flat key = value text. Relative paths resolve against the
 * directory of the loaded file. */
YC_API yc_status yc_config_new(yc_context* ctx, yc_config** out);
YC_API yc_status yc_config_load(yc_context* ctx, const char* path, yc_config** out);
YC_API yc_status yc_config_parse(yc_context* ctx, const char* text, yc_config** out);
YC_API yc_status yc_config_set(yc_context* ctx, yc_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated, truncated to size); *found is 0 when absent. */
YC_API yc_status yc_config_get(yc_context* ctx, const yc_config* cfg, const char* key, char* buf, size_t size,
                               int* found);
YC_API void yc_config_free(yc_config* cfg);

/* Subcommands. */
YC_API size_t yc_command_count(void);
YC_API const char* yc_command_name(size_t index);
YC_API yc_status yc_run_command(yc_context* ctx, const char* name, const yc_config* cfg);
YC_API yc_status yc_cmd_ingest(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_eof(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_block(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_cluster(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_trend(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_fit(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_forecast(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_evaluate(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_synth(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_run(yc_context* ctx, const yc_config* cfg);
YC_API yc_status yc_cmd_sweep(yc_context* ctx, const yc_config* cfg);

/* Rasters. */
YC_API yc_status yc_raster_load(yc_context* ctx, const char* path, yc_raster** out);
YC_API yc_status yc_raster_dims(yc_context* ctx, const yc_raster* r, size_t* n_rows, size_t* n_cols);
YC_API yc_status yc_raster_value(yc_context* ctx, const yc_raster* r, size_t row, size_t col, double* value,
                                 int* present);
YC_API void yc_raster_free(yc_raster* r);

/* Numerical building blocks. */
YC_API yc_status yc_compute_metrics(yc_context* ctx, const double* observed, const double* predicted, size_t n,
                                    double* r2, double* mspe, double* mape);
/* r is an n x n row-major neighbourhood matrix; out receives the n x n covariance, row-major. */
YC_API yc_status yc_car_covariance(yc_context* ctx, double tau2, double lambda, const int* r, size_t n, double* out);
YC_API yc_status yc_copula_transform(yc_context* ctx, double eta, double omega_ii, double* rho);
YC_API yc_status yc_imputation_moments(yc_context* ctx, double before, double after, double rho, double sigma2,
                                       double* mean, double* variance);

#ifdef __cplusplus
}
#endif

#endif
