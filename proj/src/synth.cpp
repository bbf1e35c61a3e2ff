#include "synth.hpp"

#include "config.hpp"
#include "csv.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "svar.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace yieldcast {

void SynthSpec::validate() const {
    if (n_rows == 0 || n_cols == 0) throw ValidationError("synth: grid dimensions must be positive");
    if (!(cell_size > 0.0)) throw ValidationError("synth: cell size must be positive");
    if (n_groups < 1 || n_groups > n_rows * n_cols) throw ValidationError("synth: invalid group count");
    if (layout == Layout::blocks) {
        const auto b = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_groups))));
        if (b * b != n_groups) throw ValidationError("synth: block layout needs a square group count");
        if (b > n_rows || b > n_cols) throw ValidationError("synth: more blocks than grid cells per side");
    }
    if (!(rho_min > -1.0 && rho_max < 1.0 && rho_min <= rho_max)) throw ValidationError("synth: rho range must lie in (-1, 1)");
    if (!(sigma2 > 0.0)) throw ValidationError("synth: sigma2 must be positive");
    if (cell_noise_sd < 0.0 || covariate_noise_sd < 0.0 || mean_offset_sd < 0.0)
        throw ValidationError("synth: noise levels must be nonnegative");
    if (n_years < 3) throw ValidationError("synth: need at least 3 years");
    if (gap_year && (*gap_year <= first_year || *gap_year >= first_year + static_cast<int>(n_years) - 1))
        throw ValidationError("synth: gap year must be interior");
    if (!(prior_lambda >= 0.0 && prior_lambda < 1.0)) throw ValidationError("synth: prior lambda must lie in [0, 1)");
}

SynthSpec SynthSpec::from_config(const Config& c) {
    SynthSpec s = c.get("synth.preset", "") == "inhomogeneous"
                      ? inhomogeneous(static_cast<std::uint64_t>(c.get_int("seed", 1)))
                      : SynthSpec{};
    s.n_rows = static_cast<std::size_t>(c.get_int("synth.rows", static_cast<long long>(s.n_rows)));
    s.n_cols = static_cast<std::size_t>(c.get_int("synth.cols", static_cast<long long>(s.n_cols)));
    s.cell_size = c.get_double("synth.cell_size", s.cell_size);
    s.origin_x = c.get_double("synth.origin_x", s.origin_x);
    s.origin_y = c.get_double("synth.origin_y", s.origin_y);
    if (auto layout = c.find("synth.layout")) {
        if (*layout == "blocks") s.layout = Layout::blocks;
        else if (*layout == "voronoi") s.layout = Layout::voronoi;
        else throw ValidationError("synth.layout must be blocks or voronoi");
    }
    s.n_groups = static_cast<std::size_t>(c.get_int("synth.groups", static_cast<long long>(s.n_groups)));
    if (auto rho = c.find("synth.rho")) {
        if (*rho == "smooth") s.rho_surface = RhoSurface::smooth;
        else if (*rho == "prior") s.rho_surface = RhoSurface::prior;
        else if (*rho == "covariate") s.rho_surface = RhoSurface::covariate;
        else if (*rho == "constant") s.rho_surface = RhoSurface::constant;
        else throw ValidationError("synth.rho must be smooth, prior, covariate or constant");
    }
    s.rho_min = c.get_double("synth.rho_min", s.rho_min);
    s.rho_max = c.get_double("synth.rho_max", s.rho_max);
    s.prior_lambda = c.get_double("synth.prior_lambda", s.prior_lambda);
    s.sigma2 = c.get_double("synth.sigma2", s.sigma2);
    s.mean_offset_sd = c.get_double("synth.mean_offset_sd", s.mean_offset_sd);
    s.cell_noise_sd = c.get_double("synth.cell_noise_sd", s.cell_noise_sd);
    s.covariate_noise_sd = c.get_double("synth.covariate_noise_sd", s.covariate_noise_sd);
    s.n_surveys = static_cast<std::size_t>(c.get_int("synth.surveys", static_cast<long long>(s.n_surveys)));
    s.first_year = static_cast<int>(c.get_int("synth.first_year", s.first_year));
    s.n_years = static_cast<std::size_t>(c.get_int("synth.years", static_cast<long long>(s.n_years)));
    if (c.has("synth.gap_year")) s.gap_year = static_cast<int>(c.get_int("synth.gap_year"));
    s.trend.level = c.get_double("synth.trend.level", s.trend.level);
    s.trend.year_slope = c.get_double("synth.trend.year", s.trend.year_slope);
    s.trend.rt = c.get_double("synth.trend.rt", s.trend.rt);
    s.trend.pet = c.get_double("synth.trend.pet", s.trend.pet);
    s.trend.sd = c.get_double("synth.trend.sd", s.trend.sd);
    s.trend.sa = c.get_double("synth.trend.sa", s.trend.sa);
    s.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(s.seed)));
    s.validate();
    return s;
}

SynthSpec SynthSpec::inhomogeneous(std::uint64_t seed) {
    SynthSpec s;
    s.layout = Layout::voronoi;
    s.n_groups = 150;
    s.rho_surface = RhoSurface::covariate;
    s.rho_min = 0.2;
    s.rho_max = 0.8;
    s.sigma2 = 0.01;
    s.mean_offset_sd = 0.2;
    s.cell_noise_sd = 0.05;
    s.covariate_noise_sd = 0.1;
    s.first_year = 2010;
    s.n_years = 8;
    s.seed = seed;
    return s;
}

double SynthDataset::trend_value(int year) const {
    auto it = std::find(years.begin(), years.end(), year);
    if (it == years.end()) throw ValidationError("synth: year " + std::to_string(year) + " was not simulated");
    return trend[static_cast<std::size_t>(it - years.begin())];
}

Eigen::MatrixXd simulate_ar1(const Eigen::VectorXd& rho, double sigma2, std::size_t n_years, std::uint64_t seed) {
    Rng rng = make_rng(seed, "synth-z");
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto n = rho.size();
    Eigen::MatrixXd z(n, static_cast<Eigen::Index>(n_years));
    const double sd = std::sqrt(sigma2);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i, 0) = sd / std::sqrt(1.0 - rho(i) * rho(i)) * normal(rng);
        for (Eigen::Index t = 1; t < static_cast<Eigen::Index>(n_years); ++t) z(i, t) = rho(i) * z(i, t - 1) + sd * normal(rng);
    }
    return z;
}

Eigen::VectorXd smooth_lattice_rho(std::size_t b, double rho_min, double rho_max) {
    Eigen::VectorXd rho(static_cast<Eigen::Index>(b * b));
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < b; ++c) {
            const double u = b > 1 ? static_cast<double>(r + c) / (2.0 * static_cast<double>(b - 1)) : 0.5;
            rho(static_cast<Eigen::Index>(r * b + c)) = rho_min + (rho_max - rho_min) * u;
        }
    return rho;
}

namespace {

GroupAssignment voronoi_layout(const GridGeometry& g, std::size_t n_groups, Rng& rng) {
    // Seeds at distinct random cells; every cell joins its nearest seed.
    std::vector<std::size_t> cells(g.n_cells());
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<std::pair<double, double>> seeds;
    for (std::size_t k = 0; k < n_groups; ++k)
        seeds.emplace_back(static_cast<double>(cells[k] / g.n_cols), static_cast<double>(cells[k] % g.n_cols));
    GroupAssignment a;
    a.method = AggregationMethod::clustering;
    a.n_groups = n_groups;
    a.geometry = g;
    a.labels.assign(g.n_cells(), 0);
    for (std::size_t r = 0; r < g.n_rows; ++r)
        for (std::size_t c = 0; c < g.n_cols; ++c) {
            double best = std::numeric_limits<double>::infinity();
            int label = 0;
            for (std::size_t k = 0; k < n_groups; ++k) {
                const double dr = static_cast<double>(r) - seeds[k].first;
                const double dc = static_cast<double>(c) - seeds[k].second;
                const double d = dr * dr + dc * dc;
                if (d < best) {
                    best = d;
                    label = static_cast<int>(k);
                }
            }
            a.labels[g.index(r, c)] = label;
        }
    a.validate();  // seeds sit on their own cells, so no group is empty
    return a;
}

// Normalized group centroids in [0, 1]^2.
std::vector<std::pair<double, double>> centroids(const GroupAssignment& a) {
    const auto& g = a.geometry;
    std::vector<std::pair<double, double>> out(a.n_groups, {0.0, 0.0});
    const auto sizes = a.group_sizes();
    for (std::size_t i = 0; i < g.n_cells(); ++i) {
        const auto l = static_cast<std::size_t>(a.labels[i]);
        out[l].first += static_cast<double>(i / g.n_cols);
        out[l].second += static_cast<double>(i % g.n_cols);
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].first = g.n_rows > 1 ? out[k].first / static_cast<double>(sizes[k]) / static_cast<double>(g.n_rows - 1) : 0.5;
        out[k].second = g.n_cols > 1 ? out[k].second / static_cast<double>(sizes[k]) / static_cast<double>(g.n_cols - 1) : 0.5;
    }
    return out;
}

NeighborMatrix layout_neighbors(const GroupAssignment& a) {
    if (a.method == AggregationMethod::blocking) return block_neighbors(a);
    const auto cent = centroids(a);
    SeparationMatrix d;
    const auto n = static_cast<Eigen::Index>(a.n_groups);
    d.d.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            d.d(i, j) = std::hypot(cent[static_cast<std::size_t>(i)].first - cent[static_cast<std::size_t>(j)].first,
                                   cent[static_cast<std::size_t>(i)].second - cent[static_cast<std::size_t>(j)].second);
    return epsilon_neighbors(d, auto_epsilon(d));
}

Eigen::VectorXd prior_rho(const GroupAssignment& a, double lambda, double rho_min, double rho_max, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(a.n_groups);
    Eigen::VectorXd rho(n);
    if (n == 1) {
        std::uniform_real_distribution<double> u(rho_min, rho_max);
        rho(0) = u(rng);
        return rho;
    }
    const auto nb = layout_neighbors(a);
    CarPrecision q(to_real(nb.r), lambda);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd xi(n);
    for (Eigen::Index i = 0; i < n; ++i) xi(i) = normal(rng);
    // eta ~ N(0, Q^{-1}): solve L^T eta = xi.
    Eigen::LLT<Eigen::MatrixXd> llt(q.matrix());
    const Eigen::VectorXd eta = llt.matrixU().solve(xi);
    const Eigen::VectorXd omega = q.inverse_diagonal();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = 0.5 * (copula_transform(eta(i), omega(i)) + 1.0);  // uniform on (0, 1)
        rho(i) = rho_min + (rho_max - rho_min) * u;
    }
    return rho;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

SynthDataset generate(const SynthSpec& spec) {
    spec.validate();
    SynthDataset out;
    out.spec = spec;
    auto& g = out.geometry;
    g.origin_x = spec.origin_x;
    g.origin_y = spec.origin_y;
    g.cell_size = spec.cell_size;
    g.n_rows = spec.n_rows;
    g.n_cols = spec.n_cols;

    Rng layout_rng = make_rng(spec.seed, "synth-layout");
    if (spec.layout == SynthSpec::Layout::blocks) {
        out.groups = block_partition(g, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(spec.n_groups)))));
    } else {
        out.groups = voronoi_layout(g, spec.n_groups, layout_rng);
    }
    const auto n = static_cast<Eigen::Index>(spec.n_groups);

    Rng score_rng = make_rng(spec.seed, "synth-covariate-score");
    std::normal_distribution<double> normal(0.0, 1.0);
    out.covariate_score.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) out.covariate_score(i) = normal(score_rng);
    out.mean_offset = spec.mean_offset_sd * out.covariate_score;

    Rng rho_rng = make_rng(spec.seed, "synth-rho");
    out.rho.resize(n);
    switch (spec.rho_surface) {
        case SynthSpec::RhoSurface::smooth: {
            if (spec.layout == SynthSpec::Layout::blocks) {
                out.rho = smooth_lattice_rho(out.groups.blocks_per_side, spec.rho_min, spec.rho_max);
            } else {
                const auto cent = centroids(out.groups);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const auto& c = cent[static_cast<std::size_t>(i)];
                    out.rho(i) = spec.rho_min + (spec.rho_max - spec.rho_min) * 0.5 * (c.first + c.second);
                }
            }
            break;
        }
        case SynthSpec::RhoSurface::prior:
            out.rho = prior_rho(out.groups, spec.prior_lambda, spec.rho_min, spec.rho_max, rho_rng);
            break;
        case SynthSpec::RhoSurface::covariate:
            for (Eigen::Index i = 0; i < n; ++i)
                out.rho(i) = spec.rho_min + (spec.rho_max - spec.rho_min) * standard_normal_cdf(out.covariate_score(i));
            break;
        case SynthSpec::RhoSurface::constant:
            out.rho.setConstant(0.5 * (spec.rho_min + spec.rho_max));
            break;
    }

    out.z = simulate_ar1(out.rho, spec.sigma2, spec.n_years, spec.seed);

    Rng weather_rng = make_rng(spec.seed, "synth-weather");
    std::map<int, WeatherRow> weather;
    for (std::size_t t = 0; t < spec.n_years; ++t) {
        const int year = spec.first_year + static_cast<int>(t);
        WeatherRow w;
        w.rt = 180.0 + 40.0 * normal(weather_rng);
        w.pet = 400.0 + 30.0 * normal(weather_rng);
        w.sd = 12.0 + 3.0 * normal(weather_rng);
        w.sa = 0.3 + 0.05 * normal(weather_rng);
        weather[year] = w;
        out.years.push_back(year);
        const auto& tr = spec.trend;
        out.trend.push_back(tr.level + tr.year_slope * static_cast<double>(t) + tr.rt * (w.rt - 180.0) +
                            tr.pet * (w.pet - 400.0) + tr.sd * (w.sd - 12.0) + tr.sa * (w.sa - 0.3));
    }
    out.weather = WeatherTable(std::move(weather));

    Rng noise_rng = make_rng(spec.seed, "synth-cell-noise");
    std::vector<FieldRaster> rasters;
    for (std::size_t t = 0; t < spec.n_years; ++t) {
        const int year = out.years[t];
        std::vector<double> v(g.n_cells());
        for (std::size_t i = 0; i < g.n_cells(); ++i) {
            const auto l = static_cast<Eigen::Index>(out.groups.labels[i]);
            const double eps = spec.cell_noise_sd > 0.0 ? spec.cell_noise_sd * normal(noise_rng) : 0.0;
            v[i] = std::exp(out.trend[t] + out.mean_offset(l) + out.z(l, static_cast<Eigen::Index>(t)) + eps);
        }
        if (spec.gap_year && *spec.gap_year == year) continue;
        rasters.emplace_back("yield", std::to_string(year), g, std::move(v));
    }
    out.panel = align_panel(std::move(rasters));

    Rng cov_rng = make_rng(spec.seed, "synth-ec");
    std::vector<double> ec(g.n_cells());
    for (std::size_t i = 0; i < g.n_cells(); ++i)
        ec[i] = 30.0 + 10.0 * out.covariate_score(out.groups.labels[i]) + spec.covariate_noise_sd * normal(cov_rng);
    out.deep_ec = FieldRaster("deep_ec", "static", g, ec);
    for (std::size_t k = 0; k < spec.n_surveys; ++k) {
        const double amplitude = 1.0 + 0.25 * (static_cast<double>(k) - 0.5 * static_cast<double>(spec.n_surveys - 1));
        std::vector<double> s(g.n_cells());
        for (std::size_t i = 0; i < g.n_cells(); ++i)
            s[i] = 25.0 + amplitude * 10.0 * out.covariate_score(out.groups.labels[i]) +
                   spec.covariate_noise_sd * normal(cov_rng);
        out.ec_surveys.emplace_back("ec_survey", std::to_string(k + 1), g, std::move(s));
    }
    return out;
}

void write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<ManifestEntry> entries;
    for (std::size_t k = 0; k < data.panel.years.size(); ++k) {
        const std::string name = "yield_" + std::to_string(data.panel.years[k]) + ".csv";
        write_raster(data.panel.rasters[k], dir / name);
        entries.push_back({data.panel.years[k], name});
    }
    write_manifest(entries, dir / "panel.csv");
    write_weather(data.weather, dir / "weather.csv");
    write_raster(data.deep_ec, dir / "deep_ec.csv");
    std::vector<ManifestEntry> surveys;
    for (std::size_t k = 0; k < data.ec_surveys.size(); ++k) {
        const std::string name = "ec_survey_" + std::to_string(k + 1) + ".csv";
        write_raster(data.ec_surveys[k], dir / name);
        surveys.push_back({static_cast<int>(k + 1), name});
    }
    if (!surveys.empty()) write_manifest(surveys, dir / "ec_surveys.csv");

    std::vector<double> labels(data.groups.labels.begin(), data.groups.labels.end());
    write_raster(FieldRaster("group", "truth", data.geometry, labels), dir / "true_groups.csv", "group");

    nlohmann::json truth;
    truth["seed"] = data.spec.seed;
    truth["n_groups"] = data.spec.n_groups;
    truth["sigma2"] = data.spec.sigma2;
    truth["rho"] = std::vector<double>(data.rho.data(), data.rho.data() + data.rho.size());
    truth["mean_offset"] = std::vector<double>(data.mean_offset.data(), data.mean_offset.data() + data.mean_offset.size());
    truth["years"] = data.years;
    truth["trend"] = data.trend;
    truth["trend_coefficients"] = {{"level", data.spec.trend.level},   {"year", data.spec.trend.year_slope},
                                   {"rt", data.spec.trend.rt},         {"pet", data.spec.trend.pet},
                                   {"sd", data.spec.trend.sd},         {"sa", data.spec.trend.sa}};
    if (data.spec.gap_year) truth["gap_year"] = *data.spec.gap_year;
    nlohmann::json z = nlohmann::json::array();
    for (Eigen::Index i = 0; i < data.z.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(data.z.cols()));
        for (Eigen::Index t = 0; t < data.z.cols(); ++t) row[static_cast<std::size_t>(t)] = data.z(i, t);
        z.push_back(row);
    }
    truth["z"] = z;
    truth["group_labels"] = "true_groups.csv";
    csv::write_text(dir / "truth.json", truth.dump(2) + "\n");
}

}  // namespace yieldcast
