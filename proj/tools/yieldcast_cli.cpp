// Command-line front end. Every subcommand takes a key = value config file
// plus optional overrides and maps the library status onto the exit code.
#include "yieldcast/yieldcast.h"

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace {

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::string output;
    long long seed = -1;
};

const char* summary(const std::string& name) {
    if (name == "ingest") return "validate a yield panel and summarize it";
    if (name == "eof") return "empirical orthogonal functions of repeated surveys";
    if (name == "block") return "partition the grid into square blocks";
    if (name == "cluster") return "k-means aggregation and neighbour matrix";
    if (name == "trend") return "fit the field trend and write normalized yield";
    if (name == "fit") return "sample the posterior of the spatial AR(1) model";
    if (name == "forecast") return "one-year-ahead forecast from a posterior";
    if (name == "evaluate") return "compare observed and predicted rasters";
    if (name == "synth") return "generate a synthetic dataset";
    if (name == "run") return "full pipeline with the final year held out";
    if (name == "sweep") return "refit over several epsilon policies";
    return "";
}

int execute(const std::string& name, const Options& opt) {
    std::unique_ptr<yc_context, decltype(&yc_context_free)> ctx(yc_context_new(), yc_context_free);
    if (!ctx) {
        std::fprintf(stderr, "error: out of memory\n");
        return YC_ERR_INTERNAL;
    }
    yc_config* raw = nullptr;
    yc_status st = opt.config.empty() ? yc_config_new(ctx.get(), &raw) : yc_config_load(ctx.get(), opt.config.c_str(), &raw);
    std::unique_ptr<yc_config, decltype(&yc_config_free)> cfg(raw, yc_config_free);
    auto set = [&](const std::string& key, const std::string& value) {
        if (st == YC_OK) st = yc_config_set(ctx.get(), cfg.get(), key.c_str(), value.c_str());
    };
    for (const auto& kv : opt.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
            return YC_ERR_VALIDATION;
        }
        set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!opt.output.empty()) set("output", opt.output);
    if (opt.seed >= 0) set("seed", std::to_string(opt.seed));
    if (st == YC_OK) st = yc_run_command(ctx.get(), name.c_str(), cfg.get());
    if (st != YC_OK) std::fprintf(stderr, "error: %s\n", yc_last_error(ctx.get()));
    return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Site-specific yield forecasting from gridded field data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", yc_version());

    Options opt;
    std::string chosen;
    for (std::size_t i = 0; i < yc_command_count(); ++i) {
        const std::string name = yc_command_name(i);
        auto* sub = app.add_subcommand(name, summary(name));
        sub->add_option("-c,--config", opt.config, "key = value configuration file");
        sub->add_option("-s,--set", opt.overrides, "override a configuration entry (key=value)");
        sub->add_option("-o,--output", opt.output, "output directory");
        sub->add_option("--seed", opt.seed, "root random seed");
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : YC_ERR_VALIDATION;
    }
    return execute(chosen, opt);
}
