#include "commands.hpp"

#include "csv.hpp"
#include "eof.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "pipeline.hpp"
#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace yieldcast {

namespace {

std::filesystem::path output_dir(const Config& c) {
    const auto dir = c.has("output") ? c.get_path("output") : std::filesystem::path(".");
    std::filesystem::create_directories(dir);
    return dir;
}

std::string stats_line(const FieldRaster& r) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!r.present(i)) continue;
        lo = std::min(lo, r.value(i));
        hi = std::max(hi, r.value(i));
        sum += r.value(i);
        ++n;
    }
    return std::to_string(r.size()) + "," + std::to_string(n) + "," + csv::format(sum / static_cast<double>(n)) + "," +
           csv::format(lo) + "," + csv::format(hi);
}

// Training data for the single-stage subcommands. The target year is held out
// exactly as in `run`.
TrainingData training(const Config& c, PipelineConfig& pc) {
    pc = PipelineConfig::from_config(c);
    return stage_training(pc);
}

}  // namespace

void cmd_ingest(const Config& c) {
    auto entries = load_manifest(c.get_path("panel"));
    const auto panel = load_panel(entries, "yield");
    log_transform(panel);  // rejects nonpositive yield
    std::string out = "year,status,cells,present,mean,min,max\n";
    for (int y : panel.all_years()) {
        if (panel.has_year(y)) out += std::to_string(y) + ",observed," + stats_line(panel.raster_for(y)) + "\n";
        else out += std::to_string(y) + ",gap,,,,,\n";
    }
    const auto dir = output_dir(c);
    csv::write_text(dir / "panel_summary.csv", out);
    std::string report = "grid: " + panel.geometry.describe() + "\nyears: " + std::to_string(panel.years.size()) + "\n";
    for (int g : panel.gap_years) report += "gap year: " + std::to_string(g) + "\n";
    if (c.has("weather")) {
        const auto weather = load_weather(c.get_path("weather"));
        auto years = panel.all_years();
        weather.require_years(years);
        report += "weather: covers " + std::to_string(years.front()) + "-" + std::to_string(years.back()) + "\n";
    }
    csv::write_text(dir / "ingest.txt", report);
}

void cmd_eof(const Config& c) {
    const auto k = c.get_int("eof.k", 1);
    if (k < 1) throw ValidationError("eof.k must be at least 1");
    std::vector<FieldRaster> surveys;
    std::vector<int> ids;
    for (const auto& e : load_manifest(c.get_path("ec_surveys"))) {
        surveys.push_back(load_raster(e.path, "survey").renamed("survey", std::to_string(e.year)));
        ids.push_back(e.year);
    }
    EofOptions opts;
    opts.standardize_surveys = c.get_bool("eof.standardize", false);
    const auto eof = compute_eofs(surveys, static_cast<std::size_t>(k), opts);
    const auto dir = output_dir(c);
    std::string var = "pattern,variance_fraction\n";
    for (std::size_t j = 0; j < eof.patterns.size(); ++j) {
        write_raster(eof.patterns[j], dir / ("eof_" + std::to_string(j + 1) + ".csv"));
        var += std::to_string(j + 1) + "," + csv::format(eof.variance_fraction[j]) + "\n";
    }
    csv::write_text(dir / "eof_variance.csv", var);
    std::string coef = "survey";
    for (std::size_t j = 0; j < eof.patterns.size(); ++j) coef += ",ec" + std::to_string(j + 1);
    coef += "\n";
    for (std::size_t s = 0; s < ids.size(); ++s) {
        coef += std::to_string(ids[s]);
        for (Eigen::Index j = 0; j < eof.expansion_coefficients.cols(); ++j)
            coef += "," + csv::format(eof.expansion_coefficients(static_cast<Eigen::Index>(s), j));
        coef += "\n";
    }
    csv::write_text(dir / "eof_coefficients.csv", coef);
}

void cmd_block(const Config& c) {
    const auto entries = load_manifest(c.get_path("panel"));
    if (entries.empty()) throw ValidationError("panel manifest is empty");
    const auto geom = load_raster(entries.front().path, "yield").geometry();
    const auto groups = c.get_int("groups", 25);
    const auto b = static_cast<long long>(std::llround(std::sqrt(static_cast<double>(std::max(groups, 0LL)))));
    if (groups < 1 || b * b != groups) throw ValidationError("blocking needs a square group count, got " + std::to_string(groups));
    Aggregation a;
    a.assignment = block_partition(geom, static_cast<std::size_t>(b));
    auto policy = EpsilonPolicy::parse(c.get("epsilon", "spatial"));
    const auto r = neighbor_stage(policy, a);
    const auto dir = output_dir(c);
    write_assignment(a.assignment, dir / "assignment.csv");
    write_neighbors(r, dir / "neighbors.csv");
}

void cmd_cluster(const Config& c) {
    Config cc = c;
    cc.set("method", "clustering");
    PipelineConfig pc;
    const auto data = training(cc, pc);
    const auto a = aggregate_stage(pc, data);
    const auto r = neighbor_stage(pc.svar.epsilon, a);
    const auto dir = output_dir(c);
    write_assignment(a.assignment, dir / "assignment.csv");
    write_matrix(a.separation->d, dir / "separation.csv");
    write_neighbors(r, dir / "neighbors.csv");
    std::string km = "step,inertia\n";
    for (std::size_t i = 0; i < a.clusters->fit.inertia_trace.size(); ++i)
        km += std::to_string(i) + "," + csv::format(a.clusters->fit.inertia_trace[i]) + "\n";
    csv::write_text(dir / "kmeans_trace.csv", km);
    std::string fs = "feature,mean,scale\n";
    const auto& space = a.assignment.feature_space;
    for (std::size_t j = 0; j < space.names.size(); ++j)
        fs += space.names[j] + "," + csv::format(space.mean[j]) + "," + csv::format(space.scale[j]) + "\n";
    csv::write_text(dir / "features.csv", fs);
    std::string warn;
    for (const auto& w : r.warnings) warn += w + "\n";
    csv::write_text(dir / "neighbors.txt", "epsilon policy: " + pc.svar.epsilon.label() + "\nthreshold: " +
                                               r.policy_label() + "\n" + warn);
}

void cmd_trend(const Config& c) {
    PipelineConfig pc;
    const auto data = training(c, pc);
    if (pc.weather.empty()) throw ValidationError("trend needs a weather table");
    Aggregation a;
    if (c.has("assignment")) {
        a.assignment = read_assignment(c.get_path("assignment"));
        if (!(a.assignment.geometry == data.log_panel.geometry))
            throw ValidationError("assignment grid differs from the yield grid");
    } else {
        a = aggregate_stage(pc, data);
    }
    const auto grouped = aggregate_groups(data.log_panel, a.assignment);
    const auto candidates = pc.trend_candidates.empty() ? default_trend_candidates(data.log_panel.years.size()) : pc.trend_candidates;
    const auto model = fit_trend(grouped, data.weather, candidates);
    const auto z = detrend(grouped, model, data.weather);
    const auto dir = output_dir(c);
    write_trend(model, dir);
    write_z_panel(z, dir / "z_panel.csv");
    if (!c.has("assignment")) write_assignment(a.assignment, dir / "assignment.csv");
}

void cmd_fit(const Config& c) {
    const auto z = read_z_panel(c.get_path("z_panel"));
    const auto r = read_neighbors(c.get_path("neighbors"));
    const auto svar = svar_from_config(c);
    const auto post = mcmc_run(z, r, svar);
    const auto dir = output_dir(c);
    write_posterior(post, dir / "posterior.csv");
    csv::write_text(dir / "diagnostics.txt", diagnostics_report(post, r));
}

void cmd_forecast(const Config& c) {
    const auto post = read_posterior(c.get_path("posterior"));
    const auto z = read_z_panel(c.get_path("z_panel"));
    if (!z.observed.back()) throw ValidationError("the last year of the Z panel must be observed");
    const auto model = read_trend_coefficients(c.get_path("trend"));
    const auto weather = load_weather(c.get_path("weather"));
    const int target = static_cast<int>(c.get_int("target_year", z.years.back() + 1));
    if (target != z.years.back() + 1)
        throw ValidationError("target year must directly follow the last Z year " + std::to_string(z.years.back()));
    const Eigen::VectorXd z_last = z.z.col(z.z.cols() - 1);
    const auto f = forecast(post, z_last, static_cast<std::uint64_t>(c.get_int("seed", 1)));
    const double level = model.predict(target, weather);
    std::vector<double> point, lower, upper;
    for (Eigen::Index i = 0; i < f.mean.size(); ++i) {
        point.push_back(std::exp(f.mean(i) + level));
        lower.push_back(std::exp(f.lower(i) + level));
        upper.push_back(std::exp(f.upper(i) + level));
    }
    const auto dir = output_dir(c);
    write_forecast(f, point, lower, upper, dir / "forecast.csv");
    if (c.has("assignment")) {
        const auto a = read_assignment(c.get_path("assignment"));
        write_raster(disaggregate(point, a, "yield", std::to_string(target)), dir / "predicted_yield.csv");
    }
}

void cmd_evaluate(const Config& c) {
    const auto observed = load_raster(c.get_path("observed"), "yield");
    const auto predicted = load_raster(c.get_path("predicted"), "yield");
    const auto a = read_assignment(c.get_path("assignment"));
    if (!(observed.geometry() == a.geometry) || !(predicted.geometry() == a.geometry))
        throw ValidationError("observed, predicted and assignment grids differ");
    auto group_yield = [&](const FieldRaster& r) {
        YieldPanel p;
        p.geometry = r.geometry();
        p.years = {0};
        p.rasters = {r};
        auto v = aggregate_raster(log_transform(p).rasters.front(), a);
        for (auto& x : v) x = std::exp(x);
        return v;
    };
    auto report = compute_metrics(group_yield(observed), group_yield(predicted));
    report.method = c.get("method", "clustering");
    report.n_groups = a.n_groups;
    report.epsilon = c.get("epsilon", "");
    std::vector<MetricReport> reports{report};
    if (c.get_bool("cell_metrics", false)) {
        std::vector<double> o, p;
        for (std::size_t i = 0; i < observed.size(); ++i) {
            if (!observed.present(i) || !predicted.present(i)) continue;
            o.push_back(observed.value(i));
            p.push_back(predicted.value(i));
        }
        auto cell = compute_metrics(o, p);
        cell.method = report.method;
        cell.n_groups = report.n_groups;
        cell.epsilon = report.epsilon;
        cell.flags = "cell-level";
        reports.push_back(cell);
    }
    const auto dir = output_dir(c);
    const bool eps = c.has("epsilon");
    csv::write_text(dir / "metrics.csv", comparison_csv(reports, eps));
    csv::write_text(dir / "metrics.txt", comparison_table(reports, eps));
}

void cmd_synth(const Config& c) {
    const auto spec = SynthSpec::from_config(c);
    write_dataset(generate(spec), output_dir(c));
}

void cmd_run(const Config& c) { run_pipeline(PipelineConfig::from_config(c)); }

void cmd_sweep(const Config& c) {
    const auto pc = PipelineConfig::from_config(c);
    auto values = c.get_list("sweep.epsilons");
    if (values.empty()) values = {"auto", "2xauto", "complete"};
    std::vector<EpsilonPolicy> eps;
    for (const auto& v : values) eps.push_back(EpsilonPolicy::parse(v));
    const auto rows = epsilon_sweep(pc, eps);
    std::vector<MetricReport> reports;
    for (const auto& r : rows) reports.push_back(r.report);
    reports = sort_reports(reports);
    const auto dir = output_dir(c);
    csv::write_text(dir / "sweep.csv", comparison_csv(reports, true));
    csv::write_text(dir / "sweep.txt", comparison_table(reports, true));
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"ingest",   "eof",      "block",    "cluster", "trend", "fit",
                                                "forecast", "evaluate", "synth",    "run",     "sweep"};
    return names;
}

void run_command(const std::string& name, const Config& c) {
    if (name == "ingest") cmd_ingest(c);
    else if (name == "eof") cmd_eof(c);
    else if (name == "block") cmd_block(c);
    else if (name == "cluster") cmd_cluster(c);
    else if (name == "trend") cmd_trend(c);
    else if (name == "fit") cmd_fit(c);
    else if (name == "forecast") cmd_forecast(c);
    else if (name == "evaluate") cmd_evaluate(c);
    else if (name == "synth") cmd_synth(c);
    else if (name == "run") cmd_run(c);
    else if (name == "sweep") cmd_sweep(c);
    else throw ValidationError("unknown command '" + name + "'");
}

}  // namespace yieldcast
