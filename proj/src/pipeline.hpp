#pragma once

#include "aggregate.hpp"
#include "config.hpp"
#include "eof.hpp"
#include "eval.hpp"
#include "grid.hpp"
#include "svar.hpp"
#include "trend.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace yieldcast {

struct PipelineConfig {
    std::filesystem::path panel;  // manifest `year,path`
    std::filesystem::path weather;  // optional for the aggregation-only subcommands
    std::optional<std::filesystem::path> deep_ec;
    std::optional<std::filesystem::path> ec_surveys;  // survey manifest for the `ec_eof1` feature
    std::map<std::string, std::filesystem::path> covariates;

    AggregationMethod method = AggregationMethod::clustering;
    std::size_t n_groups = 25;
    std::vector<std::string> features{"deep_ec", "current_yield"};
    std::vector<PredictorSet> trend_candidates;
    std::optional<int> target_year;  // defaults to the last manifest year
    std::filesystem::path output = "run";
    std::uint64_t seed = 1;

    SvarConfig svar;
    KMeansOptions kmeans;
    EofOptions eof;
    bool cell_metrics = false;
    Config source;  // every key as given, echoed into the run manifest

    static PipelineConfig from_config(const Config& config);
    void validate() const;
};

/// Reads the `mcmc.*`, `prior.*`, `epsilon` and `seed` keys.
SvarConfig svar_from_config(const Config& config);

/// Everything the fitting stages may see. The held-out raster is never part of it.
struct TrainingData {
    std::vector<ManifestEntry> entries;
    ManifestEntry target;
    YieldPanel log_panel;  // training years only
    WeatherTable weather;
    std::map<std::string, FieldRaster> feature_rasters;
};

/// Loads the manifest, checks the target year and reads the training rasters only.
TrainingData stage_training(const PipelineConfig& config);

struct Aggregation {
    GroupAssignment assignment;
    std::optional<ClusterResult> clusters;
    std::optional<SeparationMatrix> separation;
};

Aggregation aggregate_stage(const PipelineConfig& config, const TrainingData& data);
NeighborMatrix neighbor_stage(const EpsilonPolicy& policy, const Aggregation& aggregation);

struct FitResult {
    GroupedPanel grouped;
    TrendModel trend;
    NormalizedPanel normalized;
    NeighborMatrix neighbors;
    SvarPosterior posterior;
    Forecast z_forecast;
    double target_trend = 0.0;
    std::vector<double> point;  // exp(mean Z + trend), Mg/Ha
    std::vector<double> lower;
    std::vector<double> upper;
    FieldRaster predicted;
};

FitResult fit_stage(const PipelineConfig& config, const TrainingData& data, const Aggregation& aggregation,
                    const NeighborMatrix& neighbors);

struct Evaluation {
    std::vector<double> observed;  // per group, exp of the mean log yield
    MetricReport group;
    std::optional<MetricReport> cell;
};

/// Reads the held-out raster; the only stage allowed to.
Evaluation evaluate_stage(const PipelineConfig& config, const TrainingData& data, const Aggregation& aggregation,
                          const FitResult& fit);

struct PipelineResult {
    Aggregation aggregation;
    FitResult fit;
    Evaluation evaluation;
};

PipelineResult run_pipeline(const PipelineConfig& config);

struct SweepRow {
    MetricReport report;
    std::size_t isolated = 0;
};

/// One fit per epsilon policy on a shared clustering, plus exchangeable rows and
/// blocking rows (spatial and exchangeable) when the group count is a square.
std::vector<SweepRow> epsilon_sweep(const PipelineConfig& config, const std::vector<EpsilonPolicy>& epsilons);

// Artifact writers shared by the pipeline and the single-stage subcommands.
void write_assignment(const GroupAssignment& assignment, const std::filesystem::path& path);
GroupAssignment read_assignment(const std::filesystem::path& path);
void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path);
void write_neighbors(const NeighborMatrix& r, const std::filesystem::path& path);
NeighborMatrix read_neighbors(const std::filesystem::path& path);
void write_z_panel(const NormalizedPanel& z, const std::filesystem::path& path);
NormalizedPanel read_z_panel(const std::filesystem::path& path);
void write_trend(const TrendModel& model, const std::filesystem::path& dir);
TrendModel read_trend_coefficients(const std::filesystem::path& path);
void write_posterior(const SvarPosterior& posterior, const std::filesystem::path& path);
SvarPosterior read_posterior(const std::filesystem::path& path);
std::string diagnostics_report(const SvarPosterior& posterior, const NeighborMatrix& neighbors);
void write_forecast(const Forecast& z, const std::vector<double>& point, const std::vector<double>& lower,
                    const std::vector<double>& upper, const std::filesystem::path& path);

}  // namespace yieldcast
