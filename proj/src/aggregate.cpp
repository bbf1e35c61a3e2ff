#include "aggregate.hpp"

#include "csv.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>

namespace yieldcast {

std::string to_string(AggregationMethod m) {
    return m == AggregationMethod::blocking ? "blocking" : "clustering";
}

AggregationMethod parse_aggregation_method(const std::string& s) {
    if (s == "blocking" || s == "block") return AggregationMethod::blocking;
    if (s == "clustering" || s == "cluster") return AggregationMethod::clustering;
    throw ValidationError("unknown aggregation method '" + s + "'");
}

FeatureMatrix build_features(const std::vector<FieldRaster>& rasters) {
    if (rasters.empty()) throw ValidationError("no clustering features given");
    const auto& g = rasters.front().geometry();
    FeatureMatrix f;
    for (const auto& r : rasters) {
        if (!(r.geometry() == g))
            throw ValidationError("geometry mismatch: feature '" + r.variable_name() + "' is " + r.geometry().describe());
        f.names.push_back(r.variable_name());
    }
    for (std::size_t i = 0; i < g.n_cells(); ++i) {
        bool all = std::all_of(rasters.begin(), rasters.end(), [i](const FieldRaster& r) { return r.present(i); });
        if (all) f.cells.push_back(i);
    }
    f.points.resize(static_cast<Eigen::Index>(f.cells.size()), static_cast<Eigen::Index>(rasters.size()));
    for (std::size_t p = 0; p < f.cells.size(); ++p)
        for (std::size_t j = 0; j < rasters.size(); ++j)
            f.points(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = rasters[j].value(f.cells[p]);
    return f;
}

FeatureMatrix standardize(const FeatureMatrix& features, FeatureSpace& space) {
    FeatureMatrix out = features;
    space.names = features.names;
    space.mean.clear();
    space.scale.clear();
    space.standardized = true;
    const auto n = static_cast<double>(features.points.rows());
    for (Eigen::Index j = 0; j < features.points.cols(); ++j) {
        const double mean = features.points.col(j).mean();
        const double var = (features.points.col(j).array() - mean).square().sum() / n;
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        out.points.col(j) = (features.points.col(j).array() - mean) / sd;
        space.mean.push_back(mean);
        space.scale.push_back(sd);
    }
    return out;
}

std::vector<std::vector<std::size_t>> GroupAssignment::members() const {
    std::vector<std::vector<std::size_t>> out(n_groups);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) out[static_cast<std::size_t>(labels[i])].push_back(i);
    return out;
}

std::vector<std::size_t> GroupAssignment::group_sizes() const {
    std::vector<std::size_t> out(n_groups, 0);
    for (int l : labels)
        if (l >= 0) ++out[static_cast<std::size_t>(l)];
    return out;
}

void GroupAssignment::validate() const {
    if (labels.size() != geometry.n_cells()) throw ValidationError("assignment does not cover the grid");
    for (int l : labels)
        if (l < -1 || l >= static_cast<int>(n_groups))
            throw ValidationError("group label " + std::to_string(l) + " out of range [0, " +
                                  std::to_string(n_groups) + ")");
    const auto sizes = group_sizes();
    for (std::size_t g = 0; g < sizes.size(); ++g)
        if (sizes[g] == 0) throw ValidationError("group " + std::to_string(g) + " is empty");
}

GroupAssignment block_partition(const GridGeometry& geometry, std::size_t blocks_per_side) {
    if (blocks_per_side == 0) throw ValidationError("blocks per side must be positive");
    if (blocks_per_side > geometry.n_rows || blocks_per_side > geometry.n_cols)
        throw ValidationError(std::to_string(blocks_per_side) + " blocks per side exceeds grid " + geometry.describe());
    GroupAssignment a;
    a.method = AggregationMethod::blocking;
    a.n_groups = blocks_per_side * blocks_per_side;
    a.geometry = geometry;
    a.blocks_per_side = blocks_per_side;
    a.labels.resize(geometry.n_cells());
    // Remainder rows/columns are absorbed into the last block of each axis.
    const std::size_t rows_per_block = geometry.n_rows / blocks_per_side;
    const std::size_t cols_per_block = geometry.n_cols / blocks_per_side;
    for (std::size_t r = 0; r < geometry.n_rows; ++r) {
        const std::size_t br = std::min(r / rows_per_block, blocks_per_side - 1);
        for (std::size_t c = 0; c < geometry.n_cols; ++c) {
            const std::size_t bc = std::min(c / cols_per_block, blocks_per_side - 1);
            a.labels[geometry.index(r, c)] = static_cast<int>(br * blocks_per_side + bc);
        }
    }
    return a;
}

namespace {

struct LloydRun {
    std::vector<int> labels;
    Eigen::MatrixXd centers;
    double inertia = 0.0;
    std::vector<double> trace;
};

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& x, std::size_t k, Rng& rng) {
    const auto n = x.rows();
    Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = x.row(first(rng));
    Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = n - 1;
        if (total > 0.0) {
            double target = unif(rng) * total;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= d2(i);
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        centers.row(static_cast<Eigen::Index>(c)) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(static_cast<Eigen::Index>(c))).rowwise().squaredNorm());
    }
    return centers;
}

// Returns nullopt when a cluster ends up empty.
std::optional<LloydRun> lloyd(const Eigen::MatrixXd& x, std::size_t k, Rng& rng, const KMeansOptions& opt) {
    const auto n = x.rows();
    const auto kk = static_cast<Eigen::Index>(k);
    LloydRun run;
    run.centers = kmeanspp_seed(x, k, rng);
    run.labels.assign(static_cast<std::size_t>(n), 0);
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            double best_d = (run.centers.row(0) - x.row(i)).squaredNorm();
            for (Eigen::Index c = 1; c < kk; ++c) {
                const double d = (run.centers.row(c) - x.row(i)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            run.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
            inertia += best_d;
        }
        run.trace.push_back(inertia);
        run.inertia = inertia;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(kk, x.cols());
        std::vector<std::size_t> counts(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto l = run.labels[static_cast<std::size_t>(i)];
            sums.row(l) += x.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) return std::nullopt;
            run.centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        }
        const bool converged = std::isfinite(previous) && (previous - inertia) <= opt.relative_tolerance * previous;
        previous = inertia;
        if (converged || inertia == 0.0) break;
    }
    return run;
}

// Renumber clusters by the first point that belongs to each.
void canonicalize(std::vector<int>& labels, Eigen::MatrixXd& centers) {
    const auto k = static_cast<std::size_t>(centers.rows());
    std::vector<int> remap(k, -1);
    int next = 0;
    for (int l : labels)
        if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
    Eigen::MatrixXd reordered(centers.rows(), centers.cols());
    for (std::size_t c = 0; c < k; ++c) reordered.row(remap[c]) = centers.row(static_cast<Eigen::Index>(c));
    for (int& l : labels) l = remap[static_cast<std::size_t>(l)];
    centers = std::move(reordered);
}

}  // namespace

KMeansFit kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
    if (k < 2) throw ValidationError("k-means needs k >= 2");
    if (!points.allFinite()) throw ValidationError("k-means features must be finite");
    std::set<std::vector<double>> distinct;
    for (Eigen::Index i = 0; i < points.rows() && distinct.size() < k; ++i) {
        std::vector<double> row(static_cast<std::size_t>(points.cols()));
        for (Eigen::Index j = 0; j < points.cols(); ++j) row[static_cast<std::size_t>(j)] = points(i, j);
        distinct.insert(std::move(row));
    }
    if (distinct.size() < k)
        throw ValidationError("k-means: fewer than " + std::to_string(k) + " distinct points");

    KMeansFit best;
    bool have = false;
    for (std::size_t r = 0; r < options.restarts; ++r) {
        std::optional<LloydRun> run;
        for (std::size_t attempt = 0; attempt < options.attempts_per_restart && !run; ++attempt) {
            Rng rng = make_rng(seed, "kmeans", r * options.attempts_per_restart + attempt);
            run = lloyd(points, k, rng, options);
        }
        if (!run) {
            ++best.failed_restarts;
            continue;
        }
        if (!have || run->inertia < best.inertia) {
            best.labels = std::move(run->labels);
            best.centers = std::move(run->centers);
            best.inertia = run->inertia;
            best.inertia_trace = std::move(run->trace);
            best.restart_index = r;
            have = true;
        }
    }
    if (!have) throw NumericalError("k-means: every restart produced an empty cluster");
    canonicalize(best.labels, best.centers);
    return best;
}

ClusterResult kmeans_cluster(const FeatureMatrix& features, const GridGeometry& geometry, std::size_t k,
                             std::uint64_t seed, const KMeansOptions& options) {
    ClusterResult out;
    FeatureSpace space;
    if (options.standardize) {
        out.space_points = standardize(features, space);
    } else {
        out.space_points = features;
        space.names = features.names;
        space.mean.assign(features.names.size(), 0.0);
        space.scale.assign(features.names.size(), 1.0);
        space.standardized = false;
    }
    out.fit = kmeans(out.space_points.points, k, seed, options);
    auto& a = out.assignment;
    a.method = AggregationMethod::clustering;
    a.n_groups = k;
    a.geometry = geometry;
    a.feature_space = space;
    a.labels.assign(geometry.n_cells(), -1);
    for (std::size_t p = 0; p < features.cells.size(); ++p) a.labels[features.cells[p]] = out.fit.labels[p];
    a.validate();
    return out;
}

std::ptrdiff_t GroupedPanel::column(int year) const {
    auto it = std::find(years.begin(), years.end(), year);
    if (it == years.end()) return -1;
    return it - years.begin();
}

std::vector<double> aggregate_raster(const FieldRaster& raster, const GroupAssignment& assignment) {
    if (!(raster.geometry() == assignment.geometry))
        throw ValidationError("assignment geometry does not match raster '" + raster.variable_name() + "'");
    std::vector<double> sum(assignment.n_groups, 0.0);
    std::vector<std::size_t> count(assignment.n_groups, 0);
    for (std::size_t i = 0; i < raster.size(); ++i) {
        const int l = assignment.labels[i];
        if (l < 0 || !raster.present(i)) continue;
        sum[static_cast<std::size_t>(l)] += raster.value(i);
        ++count[static_cast<std::size_t>(l)];
    }
    for (std::size_t g = 0; g < sum.size(); ++g) {
        if (count[g] == 0)
            throw ValidationError("group " + std::to_string(g) + " has no observed cells in raster '" +
                                  raster.variable_name() + "' (" + raster.time_label() + ")");
        sum[g] /= static_cast<double>(count[g]);
    }
    return sum;
}

GroupedPanel aggregate_groups(const YieldPanel& log_panel, const GroupAssignment& assignment) {
    if (!(log_panel.geometry == assignment.geometry))
        throw ValidationError("assignment geometry " + assignment.geometry.describe() + " does not match panel " +
                              log_panel.geometry.describe());
    GroupedPanel out;
    out.years = log_panel.all_years();
    out.observed.assign(out.years.size(), 0);
    out.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(assignment.n_groups),
                                           static_cast<Eigen::Index>(out.years.size()),
                                           std::numeric_limits<double>::quiet_NaN());
    out.group_sizes = assignment.group_sizes();
    for (std::size_t t = 0; t < out.years.size(); ++t) {
        if (!log_panel.has_year(out.years[t])) continue;
        const auto means = aggregate_raster(log_panel.raster_for(out.years[t]), assignment);
        for (std::size_t g = 0; g < means.size(); ++g)
            out.values(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(t)) = means[g];
        out.observed[t] = 1;
    }
    return out;
}

SeparationMatrix separation_matrix(const FeatureMatrix& features, const std::vector<int>& labels, std::size_t n_groups) {
    const auto n = features.points.rows();
    if (static_cast<std::size_t>(n) != labels.size()) throw ValidationError("separation: label count mismatch");
    // Row-major copy for a tight inner loop.
    const auto dims = static_cast<std::size_t>(features.points.cols());
    std::vector<double> x(static_cast<std::size_t>(n) * dims);
    for (Eigen::Index i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dims; ++j) x[static_cast<std::size_t>(i) * dims + j] = features.points(i, static_cast<Eigen::Index>(j));

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_groups), static_cast<Eigen::Index>(n_groups));
    std::vector<double> count(n_groups, 0.0);
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= n_groups) throw ValidationError("separation: label out of range");
        count[static_cast<std::size_t>(l)] += 1.0;
    }
    std::vector<double> row_acc(n_groups);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        std::fill(row_acc.begin(), row_acc.end(), 0.0);
        const double* xi = &x[i * dims];
        for (std::size_t j = i + 1; j < static_cast<std::size_t>(n); ++j) {
            const double* xj = &x[j * dims];
            double s = 0.0;
            for (std::size_t d = 0; d < dims; ++d) {
                const double diff = xi[d] - xj[d];
                s += diff * diff;
            }
            row_acc[static_cast<std::size_t>(labels[j])] += std::sqrt(s);
        }
        const auto li = static_cast<Eigen::Index>(labels[i]);
        for (std::size_t g = 0; g < n_groups; ++g) {
            sum(li, static_cast<Eigen::Index>(g)) += row_acc[g];
        }
    }
    SeparationMatrix out;
    out.d.resize(static_cast<Eigen::Index>(n_groups), static_cast<Eigen::Index>(n_groups));
    for (std::size_t a = 0; a < n_groups; ++a) {
        for (std::size_t b = 0; b < n_groups; ++b) {
            const auto ai = static_cast<Eigen::Index>(a), bi = static_cast<Eigen::Index>(b);
            // Pairs were accumulated once (i < j); fold both orientations together.
            const double total = (a == b) ? sum(ai, bi) * 2.0 : sum(ai, bi) + sum(bi, ai);
            const double pairs = count[a] * count[b];
            out.d(ai, bi) = pairs > 0.0 ? total / pairs : 0.0;
        }
    }
    return out;
}

SeparationMatrix separation_matrix(const ClusterResult& clusters) {
    return separation_matrix(clusters.space_points, clusters.fit.labels, clusters.assignment.n_groups);
}

std::string NeighborMatrix::policy_label() const {
    switch (kind) {
        case NeighborKind::spatial: return "spatial";
        case NeighborKind::exchangeable: return "exchangeable";
        case NeighborKind::epsilon: break;
    }
    return csv::format(epsilon);
}

NeighborMatrix neighbors_from_adjacency(const std::vector<std::vector<std::size_t>>& adjacency, NeighborKind kind,
                                        double epsilon) {
    const auto n = adjacency.size();
    NeighborMatrix m;
    m.kind = kind;
    m.epsilon = epsilon;
    m.r = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.adjacency.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j : adjacency[i]) {
            if (j == i || j >= n) throw ValidationError("invalid neighbour pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
            m.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -1;
            m.r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = -1;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        int degree = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (m.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == -1) {
                ++degree;
                m.adjacency[i].push_back(j);
            }
        }
        m.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = degree;
        if (degree == 0) m.isolated.push_back(i);
    }
    if (!m.isolated.empty()) {
        std::string list;
        for (std::size_t i : m.isolated) list += (list.empty() ? "" : " ") + std::to_string(i);
        m.warnings.push_back("isolated clusters present: " + list);
    }
    return m;
}

NeighborMatrix neighbors_from_matrix(const Eigen::MatrixXi& r) {
    if (r.rows() != r.cols()) throw ValidationError("neighbour matrix must be square");
    const auto n = static_cast<std::size_t>(r.rows());
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i) {
        int off = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const int v = r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (v != 0 && v != -1) throw ValidationError("neighbour matrix off-diagonal entries must be 0 or -1");
            if (v != r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))) throw ValidationError("neighbour matrix is not symmetric");
            if (v == -1) {
                adj[i].push_back(j);
                ++off;
            }
        }
        if (r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) != off)
            throw ValidationError("neighbour matrix row " + std::to_string(i) + ": diagonal must equal neighbour count");
    }
    return neighbors_from_adjacency(adj, NeighborKind::epsilon, 0.0);
}

NeighborMatrix epsilon_neighbors(const SeparationMatrix& d, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    const auto n = static_cast<std::size_t>(d.d.rows());
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (d.d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) < epsilon) adj[i].push_back(j);
    return neighbors_from_adjacency(adj, NeighborKind::epsilon, epsilon);
}

NeighborMatrix block_neighbors(const GroupAssignment& assignment) {
    if (assignment.method != AggregationMethod::blocking || assignment.blocks_per_side == 0)
        throw ValidationError("spatial block neighbours need a blocking assignment");
    const auto b = static_cast<long>(assignment.blocks_per_side);
    std::vector<std::vector<std::size_t>> adj(assignment.n_groups);
    for (long br = 0; br < b; ++br)
        for (long bc = 0; bc < b; ++bc)
            for (long dr = -1; dr <= 1; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    const long r = br + dr, c = bc + dc;
                    if ((dr == 0 && dc == 0) || r < 0 || c < 0 || r >= b || c >= b) continue;
                    const auto i = static_cast<std::size_t>(br * b + bc), j = static_cast<std::size_t>(r * b + c);
                    if (i < j) adj[i].push_back(j);
                }
    return neighbors_from_adjacency(adj, NeighborKind::spatial);
}

NeighborMatrix exchangeable_neighbors(std::size_t n_groups) {
    if (n_groups < 2) throw ValidationError("exchangeable neighbours need at least two groups");
    std::vector<std::vector<std::size_t>> adj(n_groups);
    for (std::size_t i = 0; i < n_groups; ++i)
        for (std::size_t j = i + 1; j < n_groups; ++j) adj[i].push_back(j);
    return neighbors_from_adjacency(adj, NeighborKind::exchangeable);
}

double auto_epsilon(const SeparationMatrix& d) {
    const auto n = d.d.rows();
    if (n < 2) throw ValidationError("automatic epsilon needs at least two groups");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) nearest = std::min(nearest, d.d(i, j));
        worst = std::max(worst, nearest);
    }
    return worst + 1e-9;
}

}  // namespace yieldcast
