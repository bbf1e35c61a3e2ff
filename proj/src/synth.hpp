#pragma once

#include "aggregate.hpp"
#include "grid.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace yieldcast {

class Config;

/// Log-scale field trend used by the generator:
/// level + year_slope (year - first_year) + rt (RT - 180) + pet (PET - 400) + sd (SD - 12) + sa (SA - 0.3).
struct SynthTrend {
    double level = 2.4;
    double year_slope = 0.01;
    double rt = 0.001;
    double pet = -0.0005;
    double sd = 0.0;
    double sa = 0.0;
};

struct SynthSpec {
    std::size_t n_rows = 80;
    std::size_t n_cols = 80;
    double cell_size = 10.0;
    double origin_x = 5.0;
    double origin_y = 5.0;

    enum class Layout { blocks, voronoi };
    Layout layout = Layout::blocks;
    std::size_t n_groups = 25;  // must be a perfect square for the block layout

    enum class RhoSurface { smooth, prior, covariate, constant };
    RhoSurface rho_surface = RhoSurface::smooth;
    double rho_min = 0.2;
    double rho_max = 0.8;
    double prior_lambda = 0.9;  // spatial correlation when drawing rho from the copula prior

    double sigma2 = 0.0225;
    double mean_offset_sd = 0.0;  // persistent per-group offset tied to the covariate score
    double cell_noise_sd = 0.05;
    double covariate_noise_sd = 0.1;
    std::size_t n_surveys = 3;    // repeated EC surveys emitted for EOF analysis

    int first_year = 2010;
    std::size_t n_years = 8;
    std::optional<int> gap_year;
    SynthTrend trend;
    std::uint64_t seed = 1;

    void validate() const;
    /// Reads `synth.*` keys (rows, cols, layout, groups, rho, rho_min, rho_max, sigma2, ...).
    static SynthSpec from_config(const Config& config);
    /// Irregular covariate-driven zones that cut across rectangular blocks.
    static SynthSpec inhomogeneous(std::uint64_t seed);
};

struct SynthDataset {
    SynthSpec spec;
    GridGeometry geometry;
    YieldPanel panel;                    // yield (Mg/Ha) for every year except the gap year
    FieldRaster deep_ec;
    std::vector<FieldRaster> ec_surveys;
    WeatherTable weather;
    GroupAssignment groups;              // true generating groups
    Eigen::VectorXd rho;
    Eigen::VectorXd covariate_score;     // per group
    Eigen::VectorXd mean_offset;         // per group
    Eigen::MatrixXd z;                   // groups x years, including the gap year
    std::vector<int> years;              // every simulated year
    std::vector<double> trend;           // log-scale trend per simulated year

    double trend_value(int year) const;
};

SynthDataset generate(const SynthSpec& spec);

/// Group-level AR(1) series only: groups x n_years, started from the stationary law.
Eigen::MatrixXd simulate_ar1(const Eigen::VectorXd& rho, double sigma2, std::size_t n_years, std::uint64_t seed);

/// Smooth rho surface over a block lattice: linear gradient along the diagonal from rho_min to rho_max.
Eigen::VectorXd smooth_lattice_rho(std::size_t blocks_per_side, double rho_min, double rho_max);

/// Writes rasters, panel manifest, weather table, survey manifest and truth.json into `dir`.
void write_dataset(const SynthDataset& data, const std::filesystem::path& dir);

}  // namespace yieldcast
