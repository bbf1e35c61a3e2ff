#include "yieldcast/yieldcast.h"

#include "commands.hpp"
#include "config.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "grid.hpp"
#include "svar.hpp"

#include <algorithm>
#include <cstring>
#include <exception>
#include <new>
#include <string>

struct yc_context {
    std::string error;
};

struct yc_config {
    yieldcast::Config config;
};

struct yc_raster {
    yieldcast::FieldRaster raster;
};

namespace {

template <class F>
yc_status guarded(yc_context* ctx, F&& f) {
    if (!ctx) return YC_ERR_VALIDATION;
    ctx->error.clear();
    try {
        f();
        return YC_OK;
    } catch (const yieldcast::ValidationError& e) {
        ctx->error = e.what();
        return YC_ERR_VALIDATION;
    } catch (const yieldcast::NumericalError& e) {
        ctx->error = e.what();
        return YC_ERR_NUMERICAL;
    } catch (const std::bad_alloc&) {
        ctx->error = "out of memory";
        return YC_ERR_INTERNAL;
    } catch (const std::exception& e) {
        ctx->error = e.what();
        return YC_ERR_INTERNAL;
    } catch (...) {
        ctx->error = "unknown error";
        return YC_ERR_INTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (!p) throw yieldcast::ValidationError(std::string(what) + " is null");
}

yc_status command(yc_context* ctx, const char* name, const yc_config* cfg) {
    return guarded(ctx, [&] {
        require(cfg, "config");
        yieldcast::run_command(name, cfg->config);
    });
}

}  // namespace

extern "C" {

const char* yc_version(void) { return "1.0.0"; }

yc_context* yc_context_new(void) { return new (std::nothrow) yc_context(); }
void yc_context_free(yc_context* ctx) { delete ctx; }
const char* yc_last_error(const yc_context* ctx) { return ctx ? ctx->error.c_str() : "null context"; }

yc_status yc_config_new(yc_context* ctx, yc_config** out) {
    return guarded(ctx, [&] {
        require(out, "out");
        *out = new yc_config();
    });
}

yc_status yc_config_load(yc_context* ctx, const char* path, yc_config** out) {
    return guarded(ctx, [&] {
        require(path, "path");
        require(out, "out");
        *out = new yc_config{yieldcast::Config::load(path)};
    });
}

yc_status yc_config_parse(yc_context* ctx, const char* text, yc_config** out) {
    return guarded(ctx, [&] {
        require(text, "text");
        require(out, "out");
        *out = new yc_config{yieldcast::Config::parse(text)};
    });
}

yc_status yc_config_set(yc_context* ctx, yc_config* cfg, const char* key, const char* value) {
    return guarded(ctx, [&] {
        require(cfg, "config");
        require(key, "key");
        require(value, "value");
        if (!*key) throw yieldcast::ValidationError("empty config key");
        cfg->config.set(key, value);
    });
}

yc_status yc_config_get(yc_context* ctx, const yc_config* cfg, const char* key, char* buf, size_t size, int* found) {
    return guarded(ctx, [&] {
        require(cfg, "config");
        require(key, "key");
        require(found, "found");
        const auto v = cfg->config.find(key);
        *found = v ? 1 : 0;
        if (v && buf && size > 0) {
            const auto n = std::min(size - 1, v->size());
            std::memcpy(buf, v->data(), n);
            buf[n] = '\0';
        }
    });
}

void yc_config_free(yc_config* cfg) { delete cfg; }

size_t yc_command_count(void) { return yieldcast::command_names().size(); }
const char* yc_command_name(size_t index) {
    const auto& names = yieldcast::command_names();
    return index < names.size() ? names[index].c_str() : nullptr;
}

yc_status yc_run_command(yc_context* ctx, const char* name, const yc_config* cfg) {
    if (!name) return guarded(ctx, [] { require(nullptr, "command name"); });
    return command(ctx, name, cfg);
}

yc_status yc_cmd_ingest(yc_context* ctx, const yc_config* cfg) { return command(ctx, "ingest", cfg); }
yc_status yc_cmd_eof(yc_context* ctx, const yc_config* cfg) { return command(ctx, "eof", cfg); }
yc_status yc_cmd_block(yc_context* ctx, const yc_config* cfg) { return command(ctx, "block", cfg); }
yc_status yc_cmd_cluster(yc_context* ctx, const yc_config* cfg) { return command(ctx, "cluster", cfg); }
yc_status yc_cmd_trend(yc_context* ctx, const yc_config* cfg) { return command(ctx, "trend", cfg); }
yc_status yc_cmd_fit(yc_context* ctx, const yc_config* cfg) { return command(ctx, "fit", cfg); }
yc_status yc_cmd_forecast(yc_context* ctx, const yc_config* cfg) { return command(ctx, "forecast", cfg); }
yc_status yc_cmd_evaluate(yc_context* ctx, const yc_config* cfg) { return command(ctx, "evaluate", cfg); }
yc_status yc_cmd_synth(yc_context* ctx, const yc_config* cfg) { return command(ctx, "synth", cfg); }
yc_status yc_cmd_run(yc_context* ctx, const yc_config* cfg) { return command(ctx, "run", cfg); }
yc_status yc_cmd_sweep(yc_context* ctx, const yc_config* cfg) { return command(ctx, "sweep", cfg); }

yc_status yc_raster_load(yc_context* ctx, const char* path, yc_raster** out) {
    return guarded(ctx, [&] {
        require(path, "path");
        require(out, "out");
        *out = new yc_raster{yieldcast::load_raster(path, "value")};
    });
}

yc_status yc_raster_dims(yc_context* ctx, const yc_raster* r, size_t* n_rows, size_t* n_cols) {
    return guarded(ctx, [&] {
        require(r, "raster");
        require(n_rows, "n_rows");
        require(n_cols, "n_cols");
        *n_rows = r->raster.geometry().n_rows;
        *n_cols = r->raster.geometry().n_cols;
    });
}

yc_status yc_raster_value(yc_context* ctx, const yc_raster* r, size_t row, size_t col, double* value, int* present) {
    return guarded(ctx, [&] {
        require(r, "raster");
        require(value, "value");
        require(present, "present");
        const auto& g = r->raster.geometry();
        if (row >= g.n_rows || col >= g.n_cols) throw yieldcast::ValidationError("cell index out of range");
        const auto i = g.index(row, col);
        *present = r->raster.present(i) ? 1 : 0;
        *value = *present ? r->raster.value(i) : 0.0;
    });
}

void yc_raster_free(yc_raster* r) { delete r; }

yc_status yc_compute_metrics(yc_context* ctx, const double* observed, const double* predicted, size_t n, double* r2,
                             double* mspe, double* mape) {
    return guarded(ctx, [&] {
        require(observed, "observed");
        require(predicted, "predicted");
        const auto m = yieldcast::compute_metrics(std::vector<double>(observed, observed + n),
                                                  std::vector<double>(predicted, predicted + n));
        if (r2) *r2 = m.r2;
        if (mspe) *mspe = m.mspe;
        if (mape) *mape = m.mape;
    });
}

yc_status yc_car_covariance(yc_context* ctx, double tau2, double lambda, const int* r, size_t n, double* out) {
    return guarded(ctx, [&] {
        require(r, "r");
        require(out, "out");
        if (!(tau2 > 0.0)) throw yieldcast::ValidationError("tau2 must be positive");
        if (!(lambda >= 0.0 && lambda < 1.0)) throw yieldcast::ValidationError("lambda must lie in [0, 1)");
        const auto k = static_cast<Eigen::Index>(n);
        Eigen::MatrixXi m(k, k);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j) m(i, j) = r[i * k + j];
        const auto omega = yieldcast::car_covariance(tau2, lambda, yieldcast::neighbors_from_matrix(m));
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j) out[i * k + j] = omega(i, j);
    });
}

yc_status yc_copula_transform(yc_context* ctx, double eta, double omega_ii, double* rho) {
    return guarded(ctx, [&] {
        require(rho, "rho");
        if (!(omega_ii > 0.0)) throw yieldcast::ValidationError("omega_ii must be positive");
        *rho = yieldcast::copula_transform(eta, omega_ii);
    });
}

yc_status yc_imputation_moments(yc_context* ctx, double before, double after, double rho, double sigma2, double* mean,
                                double* variance) {
    return guarded(ctx, [&] {
        require(mean, "mean");
        require(variance, "variance");
        const auto m = yieldcast::imputation_moments(before, after, rho, sigma2);
        *mean = m.mean;
        *variance = m.variance;
    });
}

}  // extern "C"
