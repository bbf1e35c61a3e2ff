#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "commands.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "synth.hpp"
#include "test_support.hpp"

#include <sys/wait.h>

#include <cstdlib>

using namespace yieldcast;
namespace fs = std::filesystem;

namespace {

// Small field with 7 training years and one held-out year.
const fs::path& dataset() {
    static const fs::path dir = [] {
        auto d = testsupport::fresh_dir("pipeline_data");
        SynthSpec s;
        s.n_rows = s.n_cols = 18;
        s.n_groups = 9;
        s.n_years = 8;
        s.seed = 5;
        write_dataset(generate(s), d);
        return d;
    }();
    return dir;
}

Config base_config(const fs::path& out) {
    Config c;
    c.set("panel", (dataset() / "panel.csv").string());
    c.set("weather", (dataset() / "weather.csv").string());
    c.set("deep_ec", (dataset() / "deep_ec.csv").string());
    c.set("ec_surveys", (dataset() / "ec_surveys.csv").string());
    c.set("groups", "9");
    c.set("seed", "13");
    c.set("mcmc.iterations", "1200");
    c.set("mcmc.burn_in", "400");
    c.set("mcmc.thin", "4");
    c.set("mcmc.chains", "2");
    c.set("kmeans.restarts", "3");
    c.set("output", out.string());
    return c;
}

int exit_code(const std::string& command) {
    const int status = std::system((command + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_config(const Config& c, const fs::path& path) { testsupport::write_file(path, c.to_string()); }

}  // namespace

TEST_CASE("end-to-end run emits every artifact and is reproducible") {
    const auto a = testsupport::fresh_dir("pipeline_run_a"), b = testsupport::fresh_dir("pipeline_run_b");
    const auto res = run_pipeline(PipelineConfig::from_config(base_config(a)));
    run_pipeline(PipelineConfig::from_config(base_config(b)));
    for (const char* f : {"assignment.csv", "neighbors.csv", "separation.csv", "z_panel.csv", "trend_coefficients.csv",
                          "trend_selection.csv", "posterior.csv", "diagnostics.txt", "forecast.csv",
                          "predicted_yield.csv", "metrics.csv", "metrics.txt", "manifest.json"}) {
        CAPTURE(f);
        CHECK(fs::exists(a / f));
        // The manifest echoes the output directory, which differs between the two runs.
        if (std::string(f) != "manifest.json") CHECK(testsupport::slurp(a / f) == testsupport::slurp(b / f));
    }
    CHECK(res.fit.point.size() == 9);
    CHECK(res.evaluation.observed.size() == 9);
    CHECK(res.evaluation.group.n_groups == 9);
    CHECK(res.evaluation.group.method == "clustering");
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(res.fit.lower[i] <= res.fit.point[i]);
        CHECK(res.fit.point[i] <= res.fit.upper[i]);
    }
}

TEST_CASE("target year must be the last manifest year") {
    auto c = base_config(testsupport::fresh_dir("pipeline_bad_target") / "out");
    c.set("target_year", "2016");
    CHECK_THROWS_AS(run_pipeline(PipelineConfig::from_config(c)), ValidationError);
    CHECK_FALSE(fs::exists(testsupport::fresh_dir("pipeline_bad_target") / "out"));
    c.set("target_year", "2017");
    c.set("method", "blocking");
    c.set("groups", "8");
    CHECK_THROWS_AS(PipelineConfig::from_config(c), ValidationError);
}

TEST_CASE("fitting never reads the held-out raster") {
    const auto dir = testsupport::fresh_dir("pipeline_poison");
    for (const auto& e : fs::directory_iterator(dataset())) fs::copy(e.path(), dir / e.path().filename());
    auto c = base_config(dir / "out");
    c.set("panel", (dir / "panel.csv").string());
    const auto pc = PipelineConfig::from_config(c);
    const auto clean = run_pipeline(pc);

    const auto data = stage_training(pc);
    testsupport::write_file(dir / "yield_2017.csv", "not a raster\n");
    const auto agg = aggregate_stage(pc, data);
    const auto fit = fit_stage(pc, data, agg, neighbor_stage(pc.svar.epsilon, agg));
    CHECK(fit.point == clean.fit.point);
    CHECK_THROWS_WITH_AS(evaluate_stage(pc, data, agg, fit), doctest::Contains("evaluate: "), ValidationError);
}

TEST_CASE("epsilon sweep rows and flags") {
    auto c = base_config(testsupport::fresh_dir("pipeline_sweep"));
    const auto pc = PipelineConfig::from_config(c);
    const auto rows = epsilon_sweep(pc, {EpsilonPolicy::parse("auto"), EpsilonPolicy::parse("1e-9")});
    // Two clustering epsilons plus exchangeable, then blocking spatial and exchangeable.
    CHECK(rows.size() == 5);
    bool flagged = false;
    for (const auto& r : rows) {
        if (r.report.epsilon == "1e-09" || r.report.epsilon.find("1e-09") != std::string::npos) {
            CHECK(r.report.flags == "isolated clusters present");
            CHECK(r.isolated == 9);
            flagged = true;
        }
        if (r.report.epsilon.rfind("auto", 0) == 0) CHECK(r.isolated == 0);
    }
    CHECK(flagged);
}

TEST_CASE("single-stage subcommands chain into a forecast") {
    const auto dir = testsupport::fresh_dir("pipeline_chain");
    auto c = base_config(dir);
    c.set("method", "blocking");
    c.set("output", (dir / "block").string());
    run_command("block", c);
    CHECK(fs::exists(dir / "block/assignment.csv"));

    // The trend stage trains on every year except the last manifest year.
    c.set("assignment", (dir / "block/assignment.csv").string());
    c.set("output", (dir / "trend").string());
    run_command("trend", c);
    const auto z = read_z_panel(dir / "trend/z_panel.csv");
    CHECK(z.years.back() == 2016);
    CHECK(z.n_groups() == 9);

    c.set("z_panel", (dir / "trend/z_panel.csv").string());
    c.set("neighbors", (dir / "block/neighbors.csv").string());
    c.set("output", (dir / "fit").string());
    run_command("fit", c);
    CHECK(read_posterior(dir / "fit/posterior.csv").n_draws() == 2 * (1200 - 400) / 4);

    c.set("posterior", (dir / "fit/posterior.csv").string());
    c.set("trend", (dir / "trend/trend_coefficients.csv").string());
    c.set("output", (dir / "forecast").string());
    run_command("forecast", c);
    CHECK(fs::exists(dir / "forecast/forecast.csv"));

    c.set("observed", (dataset() / "yield_2017.csv").string());
    c.set("predicted", (dir / "forecast/predicted_yield.csv").string());
    c.set("output", (dir / "evaluate").string());
    run_command("evaluate", c);
    CHECK(testsupport::slurp(dir / "evaluate/metrics.csv").find("blocking,SVAR,9,") != std::string::npos);

    CHECK_THROWS_AS(run_command("nonsense", c), ValidationError);
}

TEST_CASE("errors carry their stage name") {
    auto c = base_config(testsupport::fresh_dir("pipeline_stage_err"));
    c.set("features", "covariate.missing");
    CHECK_THROWS_WITH_AS(run_pipeline(PipelineConfig::from_config(c)), doctest::Contains("ingest: "), ValidationError);
}

TEST_CASE("command-line exit codes") {
    const std::string cli = YC_CLI_PATH;
    const auto dir = testsupport::fresh_dir("pipeline_cli");
    auto c = base_config(dir / "ok");
    write_config(c, dir / "ok.cfg");
    CHECK(exit_code(cli + " block -c " + (dir / "ok.cfg").string() + " -s method=blocking") == 0);
    CHECK(fs::exists(dir / "ok/assignment.csv"));

    CHECK(exit_code(cli + " run -c " + (dir / "ok.cfg").string() + " -s method=blocking -s groups=8") == 2);
    CHECK(exit_code(cli + " run -c " + (dir / "missing.cfg").string()) == 2);
    CHECK(exit_code(cli + " frobnicate") == 2);

    NormalizedPanel huge;
    huge.years = {2001, 2002, 2003, 2004};
    huge.observed.assign(4, 1);
    huge.trend.assign(4, 0.0);
    huge.z = Eigen::MatrixXd::Constant(2, 4, 1e200);
    write_z_panel(huge, dir / "z.csv");
    write_neighbors(exchangeable_neighbors(2), dir / "r.csv");
    Config f;
    f.set("z_panel", (dir / "z.csv").string());
    f.set("neighbors", (dir / "r.csv").string());
    f.set("mcmc.iterations", "200");
    f.set("mcmc.burn_in", "100");
    f.set("output", (dir / "fit").string());
    write_config(f, dir / "fit.cfg");
    CHECK(exit_code(cli + " fit -c " + (dir / "fit.cfg").string()) == 3);
}
