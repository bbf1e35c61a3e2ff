#pragma once

#include "grid.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace yieldcast {

enum class AggregationMethod { blocking, clustering };

std::string to_string(AggregationMethod m);
AggregationMethod parse_aggregation_method(const std::string& s);

/// Names and standardization constants of the clustering features.
struct FeatureSpace {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> scale;  // divisor applied after centring; 1 when not standardized
    bool standardized = false;
};

/// Per-cell feature vectors over the cells observed in every feature raster.
struct FeatureMatrix {
    std::vector<std::string> names;
    std::vector<std::size_t> cells;  // raster cell index of each point
    Eigen::MatrixXd points;          // one row per cell
};

FeatureMatrix build_features(const std::vector<FieldRaster>& rasters);

/// Returns the matrix with columns centred and scaled to unit variance (population sd).
/// Constant columns are only centred.
FeatureMatrix standardize(const FeatureMatrix& features, FeatureSpace& space_out);

struct GroupAssignment {
    AggregationMethod method = AggregationMethod::blocking;
    std::size_t n_groups = 0;
    GridGeometry geometry;
    std::vector<int> labels;  // per cell; -1 for unassigned (missing) cells
    std::size_t blocks_per_side = 0;
    FeatureSpace feature_space;

    std::vector<std::vector<std::size_t>> members() const;
    std::vector<std::size_t> group_sizes() const;
    /// Throws unless every group has at least one cell and labels are in range.
    void validate() const;
};

GroupAssignment block_partition(const GridGeometry& geometry, std::size_t blocks_per_side);

struct KMeansOptions {
    std::size_t restarts = 10;
    std::size_t max_iterations = 300;
    double relative_tolerance = 1e-6;
    std::size_t attempts_per_restart = 5;
    bool standardize = true;
};

struct KMeansFit {
    std::vector<int> labels;              // per point
    Eigen::MatrixXd centers;              // k x dims
    double inertia = 0.0;
    std::vector<double> inertia_trace;    // after every assignment step of the winning restart
    std::size_t restart_index = 0;
    std::size_t failed_restarts = 0;
};

/// Lloyd's algorithm with k-means++ seeding on the rows of `points`; best of
/// `restarts` independently seeded runs.
KMeansFit kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {});

struct ClusterResult {
    GroupAssignment assignment;
    KMeansFit fit;
    FeatureMatrix space_points;  // features as used for distances (standardized if enabled)
};

ClusterResult kmeans_cluster(const FeatureMatrix& features, const GridGeometry& geometry, std::size_t k,
                             std::uint64_t seed, const KMeansOptions& options = {});

/// Group-by-year matrix of aggregated log yield. Columns cover every year from
/// first to last; gap-year columns are unobserved.
struct GroupedPanel {
    std::vector<int> years;
    std::vector<std::uint8_t> observed;  // per year column
    Eigen::MatrixXd values;              // groups x years
    std::vector<std::size_t> group_sizes;
    std::map<std::string, std::vector<double>> covariates;

    std::size_t n_groups() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_years() const { return years.size(); }
    std::ptrdiff_t column(int year) const;
};

GroupedPanel aggregate_groups(const YieldPanel& log_panel, const GroupAssignment& assignment);
std::vector<double> aggregate_raster(const FieldRaster& raster, const GroupAssignment& assignment);

struct SeparationMatrix {
    Eigen::MatrixXd d;
};

/// Mean Euclidean distance over all cross-group point pairs.
SeparationMatrix separation_matrix(const FeatureMatrix& features, const std::vector<int>& point_labels,
                                   std::size_t n_groups);
SeparationMatrix separation_matrix(const ClusterResult& clusters);

enum class NeighborKind { epsilon, spatial, exchangeable };

struct NeighborMatrix {
    Eigen::MatrixXi r;
    std::vector<std::vector<std::size_t>> adjacency;
    NeighborKind kind = NeighborKind::epsilon;
    double epsilon = 0.0;  // only meaningful for NeighborKind::epsilon
    std::vector<std::size_t> isolated;
    std::vector<std::string> warnings;

    std::size_t size() const { return static_cast<std::size_t>(r.rows()); }
    std::string policy_label() const;
};

/// Builds R from a symmetric boolean adjacency.
NeighborMatrix neighbors_from_adjacency(const std::vector<std::vector<std::size_t>>& adjacency, NeighborKind kind,
                                        double epsilon = 0.0);
NeighborMatrix neighbors_from_matrix(const Eigen::MatrixXi& r);
NeighborMatrix epsilon_neighbors(const SeparationMatrix& d, double epsilon);
NeighborMatrix block_neighbors(const GroupAssignment& assignment);
NeighborMatrix exchangeable_neighbors(std::size_t n_groups);

/// Smallest threshold giving every group at least one neighbour (plus a 1e-9 nudge).
double auto_epsilon(const SeparationMatrix& d);

}  // namespace yieldcast
