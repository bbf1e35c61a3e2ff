#include "pipeline.hpp"

#include "csv.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <set>
#include <sstream>

namespace yieldcast {

namespace {

// Prefixes the stage name onto any error escaping `f`, keeping the error category.
template <class F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(stage) + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(stage) + ": " + e.what());
    }
}

std::size_t to_count(long long v, const std::string& key) {
    if (v < 0) throw ValidationError(key + " must be nonnegative");
    return static_cast<std::size_t>(v);
}

std::size_t square_side(std::size_t n) {
    const auto b = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return b * b == n ? b : 0;
}

FieldRaster log_raster(const FieldRaster& raster, int year) {
    YieldPanel p;
    p.geometry = raster.geometry();
    p.years = {year};
    p.rasters = {raster.renamed(raster.variable_name(), std::to_string(year))};
    return log_transform(p).rasters.front();
}

std::string epsilon_label(const EpsilonPolicy& policy, const NeighborMatrix& r) {
    if (policy.kind == EpsilonPolicy::Kind::automatic && r.kind == NeighborKind::epsilon)
        return policy.label() + " (" + csv::format_fixed(r.epsilon, 3) + ")";
    return policy.label();
}

}  // namespace

SvarConfig svar_from_config(const Config& c) {
    SvarConfig s;
    s.epsilon = EpsilonPolicy::parse(c.get("epsilon", "auto"));
    s.sigma2_shape = c.get_double("prior.sigma2_shape", s.sigma2_shape);
    s.sigma2_scale = c.get_double("prior.sigma2_scale", s.sigma2_scale);
    s.tau2_shape = c.get_double("prior.tau2_shape", s.tau2_shape);
    s.tau2_scale = c.get_double("prior.tau2_scale", s.tau2_scale);
    s.n_iter = to_count(c.get_int("mcmc.iterations", static_cast<long long>(s.n_iter)), "mcmc.iterations");
    s.burn_in = to_count(c.get_int("mcmc.burn_in", static_cast<long long>(s.burn_in)), "mcmc.burn_in");
    s.thin = to_count(c.get_int("mcmc.thin", static_cast<long long>(s.thin)), "mcmc.thin");
    s.n_chains = to_count(c.get_int("mcmc.chains", static_cast<long long>(s.n_chains)), "mcmc.chains");
    s.eta_step = c.get_double("mcmc.eta_step", s.eta_step);
    s.lambda_step = c.get_double("mcmc.lambda_step", s.lambda_step);
    s.adapt = c.get_bool("mcmc.adapt", s.adapt);
    s.use_likelihood = c.get_bool("mcmc.likelihood", s.use_likelihood);
    s.seed = static_cast<std::uint64_t>(c.get_int("seed", 1));
    s.validate();
    return s;
}

PipelineConfig PipelineConfig::from_config(const Config& c) {
    PipelineConfig p;
    p.source = c;
    p.panel = c.get_path("panel");
    if (c.has("weather")) p.weather = c.get_path("weather");
    p.deep_ec = c.find_path("deep_ec");
    p.ec_surveys = c.find_path("ec_surveys");
    for (const auto& [key, value] : c.entries()) {
        if (key.rfind("covariate.", 0) == 0 && key.size() > 10) p.covariates[key.substr(10)] = c.get_path(key);
    }
    p.method = parse_aggregation_method(c.get("method", "clustering"));
    p.n_groups = to_count(c.get_int("groups", 25), "groups");
    if (c.has("features")) p.features = c.get_list("features");
    const auto candidates = c.get_list("trend.candidates");
    if (!candidates.empty() && !(candidates.size() == 1 && candidates[0] == "default")) {
        for (const auto& s : candidates) p.trend_candidates.push_back(parse_predictor_set(s));
    }
    if (c.has("target_year")) p.target_year = static_cast<int>(c.get_int("target_year"));
    p.output = c.has("output") ? c.get_path("output") : std::filesystem::path("run");
    p.seed = static_cast<std::uint64_t>(c.get_int("seed", 1));

    p.svar = svar_from_config(c);

    auto& k = p.kmeans;
    k.restarts = to_count(c.get_int("kmeans.restarts", static_cast<long long>(k.restarts)), "kmeans.restarts");
    k.max_iterations =
        to_count(c.get_int("kmeans.max_iterations", static_cast<long long>(k.max_iterations)), "kmeans.max_iterations");
    k.relative_tolerance = c.get_double("kmeans.tolerance", k.relative_tolerance);
    k.attempts_per_restart =
        to_count(c.get_int("kmeans.attempts", static_cast<long long>(k.attempts_per_restart)), "kmeans.attempts");
    k.standardize = c.get_bool("kmeans.standardize", k.standardize);

    p.eof.standardize_surveys = c.get_bool("eof.standardize", false);
    p.cell_metrics = c.get_bool("cell_metrics", false);
    p.validate();
    return p;
}

void PipelineConfig::validate() const {
    if (n_groups < 2) throw ValidationError("groups must be at least 2");
    if (method == AggregationMethod::blocking && square_side(n_groups) == 0)
        throw ValidationError("blocking needs a square group count, got " + std::to_string(n_groups));
    if (method == AggregationMethod::clustering && features.empty())
        throw ValidationError("clustering needs at least one feature");
    if (method == AggregationMethod::clustering && svar.epsilon.kind == EpsilonPolicy::Kind::spatial)
        throw ValidationError("epsilon 'spatial' applies to blocking only");
    if (method == AggregationMethod::blocking && svar.epsilon.kind == EpsilonPolicy::Kind::value)
        throw ValidationError("a numeric epsilon applies to clustering only");
    svar.validate();
    if (kmeans.restarts == 0 || kmeans.attempts_per_restart == 0 || kmeans.max_iterations == 0)
        throw ValidationError("kmeans restarts, attempts and iterations must be positive");
}

TrainingData stage_training(const PipelineConfig& config) {
    return in_stage("ingest", [&] {
        TrainingData d;
        auto entries = load_manifest(config.panel);
        if (entries.size() < 2) throw ValidationError("panel manifest lists fewer than two years");
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
        const int last = entries.back().year;
        if (config.target_year && *config.target_year != last)
            throw ValidationError("target year " + std::to_string(*config.target_year) +
                                  " must be the final panel year " + std::to_string(last));
        d.target = entries.back();
        entries.pop_back();
        if (entries.back().year != d.target.year - 1)
            throw ValidationError("target year " + std::to_string(d.target.year) +
                                  " must directly follow the last training year " + std::to_string(entries.back().year));
        d.entries = entries;
        if (!config.weather.empty()) {
            d.weather = load_weather(config.weather);
            std::vector<int> needed;
            for (int y = entries.front().year; y <= d.target.year; ++y) needed.push_back(y);
            d.weather.require_years(needed);
        }

        d.log_panel = log_transform(load_panel(entries, "yield"));
        const auto& geom = d.log_panel.geometry;
        if (config.method != AggregationMethod::clustering) return d;

        for (const auto& name : config.features) {
            if (d.feature_rasters.count(name)) throw ValidationError("feature '" + name + "' listed twice");
            FieldRaster r;
            if (name == "current_yield") {
                r = d.log_panel.rasters.back().renamed("current_yield", std::to_string(d.log_panel.years.back()));
            } else if (name == "ec_eof1") {
                if (!config.ec_surveys) throw ValidationError("feature ec_eof1 needs ec_surveys");
                std::vector<FieldRaster> surveys;
                for (const auto& e : load_manifest(*config.ec_surveys))
                    surveys.push_back(load_raster(e.path, "ec").renamed("ec", std::to_string(e.year)));
                r = compute_eofs(surveys, 1, config.eof).patterns.front().renamed("ec_eof1", "static");
            } else if (name == "deep_ec") {
                if (!config.deep_ec) throw ValidationError("feature deep_ec needs a deep_ec raster");
                r = load_raster(*config.deep_ec, "deep_ec");
            } else {
                auto it = config.covariates.find(name);
                if (it == config.covariates.end())
                    throw ValidationError("feature '" + name + "' has no covariate." + name + " path");
                r = load_raster(it->second, name);
            }
            if (!(r.geometry() == geom))
                throw ValidationError("feature '" + name + "' grid " + r.geometry().describe() +
                                      " differs from the yield grid " + geom.describe());
            d.feature_rasters.emplace(name, std::move(r));
        }
        return d;
    });
}

Aggregation aggregate_stage(const PipelineConfig& config, const TrainingData& data) {
    return in_stage("aggregate", [&] {
        Aggregation a;
        const auto& geom = data.log_panel.geometry;
        if (config.method == AggregationMethod::blocking) {
            a.assignment = block_partition(geom, square_side(config.n_groups));
            return a;
        }
        std::vector<FieldRaster> rasters;
        for (const auto& name : config.features) rasters.push_back(data.feature_rasters.at(name));
        const auto features = build_features(rasters);
        a.clusters = kmeans_cluster(features, geom, config.n_groups, substream_seed(config.seed, "kmeans"), config.kmeans);
        a.assignment = a.clusters->assignment;
        a.separation = separation_matrix(*a.clusters);
        return a;
    });
}

NeighborMatrix neighbor_stage(const EpsilonPolicy& policy, const Aggregation& aggregation) {
    return in_stage("neighbors", [&] {
        const auto n = aggregation.assignment.n_groups;
        using K = EpsilonPolicy::Kind;
        if (aggregation.assignment.method == AggregationMethod::blocking) {
            switch (policy.kind) {
                case K::automatic:
                    if (policy.multiple != 1.0) throw ValidationError("scaled auto epsilon applies to clustering only");
                    [[fallthrough]];
                case K::spatial: return block_neighbors(aggregation.assignment);
                case K::complete:
                case K::exchangeable: return exchangeable_neighbors(n);
                case K::value: break;
            }
            throw ValidationError("a numeric epsilon applies to clustering only");
        }
        if (!aggregation.separation) throw ValidationError("clustering neighbours need the separation matrix");
        const auto& d = *aggregation.separation;
        switch (policy.kind) {
            case K::automatic: return epsilon_neighbors(d, policy.multiple * auto_epsilon(d));
            case K::value: return epsilon_neighbors(d, policy.value);
            case K::complete: return epsilon_neighbors(d, std::numeric_limits<double>::infinity());
            case K::exchangeable: return exchangeable_neighbors(n);
            case K::spatial: break;
        }
        throw ValidationError("epsilon 'spatial' applies to blocking only");
    });
}

FitResult fit_stage(const PipelineConfig& config, const TrainingData& data, const Aggregation& aggregation,
                    const NeighborMatrix& neighbors) {
    FitResult f;
    f.neighbors = neighbors;
    const int target = data.target.year;
    in_stage("trend", [&] {
        f.grouped = aggregate_groups(data.log_panel, aggregation.assignment);
        const auto candidates = config.trend_candidates.empty() ? default_trend_candidates(data.log_panel.years.size()) : config.trend_candidates;
        f.trend = fit_trend(f.grouped, data.weather, candidates);
        f.normalized = detrend(f.grouped, f.trend, data.weather);
        f.target_trend = f.trend.predict(target, data.weather);
    });
    in_stage("fit", [&] { f.posterior = mcmc_run(f.normalized, neighbors, config.svar); });
    in_stage("forecast", [&] {
        const Eigen::VectorXd z_last = f.normalized.z.col(f.normalized.z.cols() - 1);
        f.z_forecast = forecast(f.posterior, z_last, config.seed);
        const auto n = aggregation.assignment.n_groups;
        f.point.resize(n);
        f.lower.resize(n);
        f.upper.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            f.point[i] = std::exp(f.z_forecast.mean(k) + f.target_trend);
            f.lower[i] = std::exp(f.z_forecast.lower(k) + f.target_trend);
            f.upper[i] = std::exp(f.z_forecast.upper(k) + f.target_trend);
        }
        f.predicted = disaggregate(f.point, aggregation.assignment, "yield", std::to_string(target));
    });
    return f;
}

Evaluation evaluate_stage(const PipelineConfig& config, const TrainingData& data, const Aggregation& aggregation,
                          const FitResult& fit) {
    return in_stage("evaluate", [&] {
        Evaluation ev;
        const auto observed_raster = load_raster(data.target.path, "yield");
        if (!(observed_raster.geometry() == data.log_panel.geometry))
            throw ValidationError("held-out raster grid differs from the training grid");
        const auto log_obs = log_raster(observed_raster, data.target.year);
        ev.observed = aggregate_raster(log_obs, aggregation.assignment);
        for (auto& v : ev.observed) v = std::exp(v);
        ev.group = compute_metrics(ev.observed, fit.point);
        ev.group.method = to_string(aggregation.assignment.method);
        ev.group.n_groups = aggregation.assignment.n_groups;
        ev.group.epsilon = epsilon_label(config.svar.epsilon, fit.neighbors);
        if (!fit.neighbors.isolated.empty()) ev.group.flags = "isolated clusters present";
        if (config.cell_metrics) {
            std::vector<double> o, p;
            for (std::size_t i = 0; i < observed_raster.size(); ++i) {
                if (!observed_raster.present(i) || !fit.predicted.present(i)) continue;
                o.push_back(observed_raster.value(i));
                p.push_back(fit.predicted.value(i));
            }
            MetricReport cell = compute_metrics(o, p);
            cell.method = ev.group.method;
            cell.n_groups = ev.group.n_groups;
            cell.epsilon = ev.group.epsilon;
            cell.flags = ev.group.flags.empty() ? "cell-level" : ev.group.flags + "; cell-level";
            ev.cell = cell;
        }
        return ev;
    });
}

// ---- artifact I/O -------------------------------------------------------

void write_assignment(const GroupAssignment& a, const std::filesystem::path& path) {
    std::vector<double> values(a.labels.size());
    std::vector<std::uint8_t> present(a.labels.size());
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        present[i] = a.labels[i] >= 0;
        values[i] = a.labels[i] >= 0 ? a.labels[i] : 0.0;
    }
    write_raster(FieldRaster("group", to_string(a.method), a.geometry, values, present), path, "group");
}

GroupAssignment read_assignment(const std::filesystem::path& path) {
    const auto r = load_raster(path, "group");
    GroupAssignment a;
    a.geometry = r.geometry();
    a.labels.assign(r.size(), -1);
    int max_label = -1;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!r.present(i)) continue;
        const double v = r.value(i);
        if (v < 0 || v != std::floor(v)) throw ValidationError(path.string() + ": group labels must be nonnegative integers");
        a.labels[i] = static_cast<int>(v);
        max_label = std::max(max_label, a.labels[i]);
    }
    if (max_label < 0) throw ValidationError(path.string() + ": no labelled cells");
    a.n_groups = static_cast<std::size_t>(max_label) + 1;
    a.method = AggregationMethod::clustering;
    a.validate();
    return a;
}

void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += csv::format(m(i, j));
        }
        out += '\n';
    }
    csv::write_text(path, out);
}

void write_neighbors(const NeighborMatrix& r, const std::filesystem::path& path) { write_matrix(to_real(r.r), path); }

NeighborMatrix read_neighbors(const std::filesystem::path& path) {
    const auto rows = csv::read_matrix(path);
    Eigen::MatrixXi r(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.empty() ? 0 : rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            const double v = rows[i][j];
            if (v != std::floor(v)) throw ValidationError(path.string() + ": R entries must be integers");
            r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<int>(v);
        }
    return neighbors_from_matrix(r);
}

void write_z_panel(const NormalizedPanel& z, const std::filesystem::path& path) {
    std::string out = "group";
    for (int y : z.years) out += "," + std::to_string(y);
    out += '\n';
    for (std::size_t i = 0; i < z.n_groups(); ++i) {
        out += std::to_string(i);
        for (std::size_t t = 0; t < z.n_years(); ++t) {
            out += ',';
            if (z.observed[t]) out += csv::format(z.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
        }
        out += '\n';
    }
    csv::write_text(path, out);
}

NormalizedPanel read_z_panel(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    if (table.header.size() < 2 || table.header[0] != "group")
        throw ValidationError(path.string() + ":1: expected header group,<year>,...");
    NormalizedPanel z;
    for (std::size_t t = 1; t < table.header.size(); ++t) {
        const int y = static_cast<int>(csv::parse_int(table.header[t], path.string() + ":1"));
        if (!z.years.empty() && y != z.years.back() + 1)
            throw ValidationError(path.string() + ":1: years must be consecutive");
        z.years.push_back(y);
    }
    const auto n = table.rows.size();
    if (n == 0) throw ValidationError(path.string() + ": no groups");
    z.z = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(z.years.size()),
                                    std::numeric_limits<double>::quiet_NaN());
    std::vector<int> filled(z.years.size(), -1);  // -1 unseen, 0 empty, 1 value
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        const std::string ctx = path.string() + ":" + std::to_string(row.line);
        if (csv::parse_int(row.fields[0], ctx) != static_cast<long long>(i))
            throw ValidationError(ctx + ": groups must be listed as 0, 1, 2, ...");
        for (std::size_t t = 0; t < z.years.size(); ++t) {
            const auto v = csv::parse_optional_double(row.fields[t + 1], ctx);
            const int state = v ? 1 : 0;
            if (filled[t] >= 0 && filled[t] != state)
                throw ValidationError(ctx + ": year " + std::to_string(z.years[t]) + " is partly missing");
            filled[t] = state;
            if (v) z.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = *v;
        }
    }
    for (int s : filled) z.observed.push_back(s == 1);
    z.trend.assign(z.years.size(), 0.0);
    return z;
}

void write_trend(const TrendModel& model, const std::filesystem::path& dir) {
    std::string coef = "term,coefficient\nintercept," + csv::format(model.coefficients.at(0)) + "\n";
    for (std::size_t j = 0; j < model.predictors.size(); ++j)
        coef += to_string(model.predictors[j]) + "," + csv::format(model.coefficients[j + 1]) + "\n";
    csv::write_text(dir / "trend_coefficients.csv", coef);

    std::string fitted = "year,response,fitted\n";
    for (std::size_t t = 0; t < model.years.size(); ++t)
        fitted += std::to_string(model.years[t]) + "," + csv::format(model.response[t]) + "," + csv::format(model.fitted[t]) + "\n";
    csv::write_text(dir / "trend_fitted.csv", fitted);

    std::string sel = "predictors,in_sample_mse,loocv_mse,rank_deficient,selected\n";
    for (const auto& s : model.scores)
        sel += to_string(s.predictors) + "," + csv::format(s.in_sample_mse) + "," + csv::format(s.loocv_mse) + "," +
               (s.rank_deficient ? "1" : "0") + "," + (s.selected ? "1" : "0") + "\n";
    csv::write_text(dir / "trend_selection.csv", sel);
}

TrendModel read_trend_coefficients(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    if (table.header != std::vector<std::string>{"term", "coefficient"})
        throw ValidationError(path.string() + ":1: expected header term,coefficient");
    if (table.rows.empty() || table.rows[0].fields[0] != "intercept")
        throw ValidationError(path.string() + ": first term must be the intercept");
    PredictorSet predictors;
    std::vector<double> coefficients;
    for (const auto& row : table.rows) {
        const std::string ctx = path.string() + ":" + std::to_string(row.line);
        if (row.fields[0] != "intercept") {
            const auto p = parse_predictor_set(row.fields[0]);
            if (p.size() != 1) throw ValidationError(ctx + ": unknown term '" + row.fields[0] + "'");
            predictors.push_back(p[0]);
        }
        coefficients.push_back(csv::parse_double(row.fields[1], ctx));
    }
    return TrendModel::from_coefficients(std::move(predictors), std::move(coefficients));
}

void write_posterior(const SvarPosterior& post, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "chain,iter,parameter,value\n";
    const auto n = static_cast<Eigen::Index>(post.n_groups);
    for (std::size_t d = 0; d < post.n_draws(); ++d) {
        const auto k = static_cast<Eigen::Index>(d);
        const std::string prefix = std::to_string(post.chain[d]) + "," + std::to_string(post.iteration[d]) + ",";
        for (Eigen::Index i = 0; i < n; ++i) out << prefix << "rho[" << i << "]," << csv::format(post.rho(k, i)) << '\n';
        for (Eigen::Index i = 0; i < n; ++i) out << prefix << "eta[" << i << "]," << csv::format(post.eta(k, i)) << '\n';
        out << prefix << "sigma2," << csv::format(post.sigma2(k)) << '\n';
        out << prefix << "tau2," << csv::format(post.tau2(k)) << '\n';
        out << prefix << "lambda," << csv::format(post.lambda(k)) << '\n';
        for (std::size_t g = 0; g < post.gap_years.size(); ++g)
            for (Eigen::Index i = 0; i < n; ++i)
                out << prefix << "z_gap[" << post.gap_years[g] << "][" << i << "],"
                    << csv::format(post.z_missing(k, static_cast<Eigen::Index>(g) * n + i)) << '\n';
    }
    csv::write_text(path, out.str());
}

namespace {

// "rho[3]" -> ("rho", {3}); "z_gap[2009][3]" -> ("z_gap", {2009, 3}).
std::pair<std::string, std::vector<long long>> parse_parameter(const std::string& s, const std::string& ctx) {
    const auto open = s.find('[');
    std::pair<std::string, std::vector<long long>> out{s.substr(0, open), {}};
    auto pos = open;
    while (pos != std::string::npos) {
        const auto close = s.find(']', pos);
        if (close == std::string::npos) throw ValidationError(ctx + ": malformed parameter '" + s + "'");
        out.second.push_back(csv::parse_int(s.substr(pos + 1, close - pos - 1), ctx));
        pos = s.find('[', close);
    }
    return out;
}

}  // namespace

SvarPosterior read_posterior(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    if (table.header != std::vector<std::string>{"chain", "iter", "parameter", "value"})
        throw ValidationError(path.string() + ":1: expected header chain,iter,parameter,value");
    struct Draw {
        int chain, iter;
        std::map<long long, double> rho, eta;
        std::map<std::pair<long long, long long>, double> gap;
        double sigma2 = std::numeric_limits<double>::quiet_NaN(), tau2 = sigma2, lambda = sigma2;
    };
    std::vector<Draw> draws;
    std::set<long long> gap_years;
    for (const auto& row : table.rows) {
        const std::string ctx = path.string() + ":" + std::to_string(row.line);
        const int chain = static_cast<int>(csv::parse_int(row.fields[0], ctx));
        const int iter = static_cast<int>(csv::parse_int(row.fields[1], ctx));
        if (draws.empty() || draws.back().chain != chain || draws.back().iter != iter) draws.push_back({chain, iter, {}, {}, {}});
        auto& d = draws.back();
        const double v = csv::parse_double(row.fields[3], ctx);
        const auto [name, idx] = parse_parameter(row.fields[2], ctx);
        if (name == "rho" && idx.size() == 1) d.rho[idx[0]] = v;
        else if (name == "eta" && idx.size() == 1) d.eta[idx[0]] = v;
        else if (name == "sigma2" && idx.empty()) d.sigma2 = v;
        else if (name == "tau2" && idx.empty()) d.tau2 = v;
        else if (name == "lambda" && idx.empty()) d.lambda = v;
        else if (name == "z_gap" && idx.size() == 2) {
            d.gap[{idx[0], idx[1]}] = v;
            gap_years.insert(idx[0]);
        } else throw ValidationError(ctx + ": unknown parameter '" + row.fields[2] + "'");
    }
    if (draws.empty()) throw ValidationError(path.string() + ": no draws");
    SvarPosterior p;
    p.n_groups = draws.front().rho.size();
    for (auto y : gap_years) p.gap_years.push_back(static_cast<int>(y));
    const auto n = static_cast<Eigen::Index>(p.n_groups);
    const auto m = static_cast<Eigen::Index>(draws.size());
    p.rho.resize(m, n);
    p.eta.resize(m, n);
    p.sigma2.resize(m);
    p.tau2.resize(m);
    p.lambda.resize(m);
    p.z_missing.resize(m, static_cast<Eigen::Index>(p.gap_years.size()) * n);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& d = draws[static_cast<std::size_t>(k)];
        const std::string where = path.string() + ": draw chain " + std::to_string(d.chain) + " iter " + std::to_string(d.iter);
        if (static_cast<Eigen::Index>(d.rho.size()) != n || !std::isfinite(d.sigma2))
            throw ValidationError(where + " is incomplete");
        p.chain.push_back(d.chain);
        p.iteration.push_back(d.iter);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto it = d.rho.find(i);
            if (it == d.rho.end()) throw ValidationError(where + " lacks rho[" + std::to_string(i) + "]");
            p.rho(k, i) = it->second;
            auto e = d.eta.find(i);
            p.eta(k, i) = e == d.eta.end() ? std::numeric_limits<double>::quiet_NaN() : e->second;
        }
        p.sigma2(k) = d.sigma2;
        p.tau2(k) = d.tau2;
        p.lambda(k) = d.lambda;
        for (std::size_t g = 0; g < p.gap_years.size(); ++g)
            for (Eigen::Index i = 0; i < n; ++i) {
                auto it = d.gap.find({p.gap_years[g], i});
                p.z_missing(k, static_cast<Eigen::Index>(g) * n + i) =
                    it == d.gap.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
            }
    }
    return p;
}

std::string diagnostics_report(const SvarPosterior& post, const NeighborMatrix& r) {
    std::ostringstream out;
    out << "groups: " << post.n_groups << "\n";
    out << "draws: " << post.n_draws() << "\n";
    out << "neighbour policy: " << r.policy_label() << "\n";
    for (const auto& w : r.warnings) out << "warning: " << w << "\n";
    out << "\nacceptance\n";
    for (const auto& [k, v] : post.acceptance) out << "  " << k << " " << csv::format_fixed(v, 3) << "\n";
    out << "\nsplit R-hat\n";
    // Indexed keys in numeric order: rho[2] before rho[10].
    std::vector<std::pair<std::string, double>> rhat(post.rhat.begin(), post.rhat.end());
    auto split = [](const std::string& k) {
        const auto b = k.find('[');
        if (b == std::string::npos) return std::make_pair(k, -1L);
        return std::make_pair(k.substr(0, b), std::stol(k.substr(b + 1)));
    };
    std::sort(rhat.begin(), rhat.end(), [&](const auto& a, const auto& b) { return split(a.first) < split(b.first); });
    double worst = 0.0;
    for (const auto& [k, v] : rhat) {
        out << "  " << k << " " << csv::format_fixed(v, 3) << "\n";
        if (std::isfinite(v)) worst = std::max(worst, v);
    }
    out << "\nmax R-hat: " << csv::format_fixed(worst, 3) << "\n";
    return out.str();
}

void write_forecast(const Forecast& z, const std::vector<double>& point, const std::vector<double>& lower,
                    const std::vector<double>& upper, const std::filesystem::path& path) {
    std::string out = "group,z_mean,z_median,z_lower,z_upper,yield,yield_lower,yield_upper\n";
    for (std::size_t i = 0; i < point.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out += std::to_string(i) + "," + csv::format(z.mean(k)) + "," + csv::format(z.median(k)) + "," +
               csv::format(z.lower(k)) + "," + csv::format(z.upper(k)) + "," + csv::format(point[i]) + "," +
               csv::format(lower[i]) + "," + csv::format(upper[i]) + "\n";
    }
    csv::write_text(path, out);
}

// ---- whole runs -----------------------------------------------------------

PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    if (config.weather.empty()) throw ValidationError("run needs a weather table");
    const auto data = stage_training(config);
    PipelineResult res;
    res.aggregation = aggregate_stage(config, data);
    const auto neighbors = neighbor_stage(config.svar.epsilon, res.aggregation);
    res.fit = fit_stage(config, data, res.aggregation, neighbors);
    res.evaluation = evaluate_stage(config, data, res.aggregation, res.fit);

    in_stage("write", [&] {
        const auto& dir = config.output;
        std::filesystem::create_directories(dir);
        write_assignment(res.aggregation.assignment, dir / "assignment.csv");
        write_neighbors(neighbors, dir / "neighbors.csv");
        if (res.aggregation.separation) write_matrix(res.aggregation.separation->d, dir / "separation.csv");
        write_z_panel(res.fit.normalized, dir / "z_panel.csv");
        write_trend(res.fit.trend, dir);
        write_posterior(res.fit.posterior, dir / "posterior.csv");
        csv::write_text(dir / "diagnostics.txt", diagnostics_report(res.fit.posterior, neighbors));
        write_forecast(res.fit.z_forecast, res.fit.point, res.fit.lower, res.fit.upper, dir / "forecast.csv");
        write_raster(res.fit.predicted, dir / "predicted_yield.csv");
        std::vector<MetricReport> reports{res.evaluation.group};
        if (res.evaluation.cell) reports.push_back(*res.evaluation.cell);
        csv::write_text(dir / "metrics.csv", comparison_csv(reports, true));
        csv::write_text(dir / "metrics.txt", comparison_table(reports, true));

        nlohmann::json m;
        m["config"] = config.source.entries();
        m["seed"] = config.seed;
        m["target_year"] = data.target.year;
        m["training_years"] = data.log_panel.years;
        m["gap_years"] = data.log_panel.gap_years;
        m["method"] = to_string(res.aggregation.assignment.method);
        m["groups"] = res.aggregation.assignment.n_groups;
        m["epsilon"] = res.evaluation.group.epsilon;
        m["trend"] = to_string(res.fit.trend.predictors);
        m["draws"] = res.fit.posterior.n_draws();
        m["files"] = {"assignment.csv", "neighbors.csv", "z_panel.csv", "trend_coefficients.csv", "trend_fitted.csv",
                      "trend_selection.csv", "posterior.csv", "diagnostics.txt", "forecast.csv",
                      "predicted_yield.csv", "metrics.csv", "metrics.txt"};
        if (res.aggregation.separation) m["files"].push_back("separation.csv");
        csv::write_text(dir / "manifest.json", m.dump(2) + "\n");
    });
    return res;
}

std::vector<SweepRow> epsilon_sweep(const PipelineConfig& config, const std::vector<EpsilonPolicy>& epsilons) {
    if (config.method != AggregationMethod::clustering) throw ValidationError("sweep: method must be clustering");
    if (epsilons.empty()) throw ValidationError("sweep: no epsilon values");
    config.validate();
    if (config.weather.empty()) throw ValidationError("sweep needs a weather table");
    const auto data = stage_training(config);

    struct Job {
        PipelineConfig cfg;
        const Aggregation* aggregation;
    };
    const auto clustered = aggregate_stage(config, data);
    std::optional<Aggregation> blocked;
    std::vector<Job> jobs;
    auto add = [&](const PipelineConfig& base, const EpsilonPolicy& e, const Aggregation* a) {
        PipelineConfig c = base;
        c.svar.epsilon = e;
        jobs.push_back({c, a});
    };
    for (const auto& e : epsilons) {
        if (e.kind == EpsilonPolicy::Kind::spatial) throw ValidationError("sweep: 'spatial' is added automatically for blocking");
        add(config, e, &clustered);
    }
    const bool has_exchangeable = std::any_of(epsilons.begin(), epsilons.end(), [](const EpsilonPolicy& e) {
        return e.kind == EpsilonPolicy::Kind::exchangeable;
    });
    if (!has_exchangeable) add(config, EpsilonPolicy::parse("exchangeable"), &clustered);
    if (square_side(config.n_groups) != 0) {
        PipelineConfig b = config;
        b.method = AggregationMethod::blocking;
        blocked = aggregate_stage(b, data);
        add(b, EpsilonPolicy::parse("spatial"), &*blocked);
        add(b, EpsilonPolicy::parse("exchangeable"), &*blocked);
    }

    std::vector<std::future<SweepRow>> futures;
    for (const auto& job : jobs) {
        futures.push_back(std::async(std::launch::async, [&data, &job] {
            const auto r = neighbor_stage(job.cfg.svar.epsilon, *job.aggregation);
            const auto fit = fit_stage(job.cfg, data, *job.aggregation, r);
            const auto ev = evaluate_stage(job.cfg, data, *job.aggregation, fit);
            return SweepRow{ev.group, r.isolated.size()};
        }));
    }
    std::vector<SweepRow> rows;
    for (auto& f : futures) rows.push_back(f.get());
    return rows;
}

}  // namespace yieldcast
