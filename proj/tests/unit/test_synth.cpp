#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aggregate.hpp"
#include "error.hpp"
#include "synth.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <cmath>

using namespace yieldcast;

namespace {

SynthSpec small_spec() {
    SynthSpec s;
    s.n_rows = 12;
    s.n_cols = 12;
    s.n_groups = 9;
    s.n_years = 6;
    s.seed = 3;
    return s;
}

}  // namespace

TEST_CASE("noise-free degenerate field equals the trend") {
    auto s = small_spec();
    s.rho_surface = SynthSpec::RhoSurface::constant;
    s.rho_min = s.rho_max = 0.0;
    s.sigma2 = 1e-30;
    s.cell_noise_sd = 0.0;
    const auto d = generate(s);
    for (Eigen::Index t = 1; t < d.z.cols(); ++t) CHECK(d.z.col(t).cwiseAbs().maxCoeff() < 1e-12);
    for (std::size_t k = 0; k < d.panel.years.size(); ++k) {
        const double expected = std::exp(d.trend_value(d.panel.years[k]));
        const auto& r = d.panel.rasters[k];
        for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(r.value(i) / expected - 1.0) < 1e-12);
    }
}

TEST_CASE("fixed seed gives identical files") {
    auto s = small_spec();
    s.gap_year = 2012;
    const auto a = testsupport::fresh_dir("synth_a"), b = testsupport::fresh_dir("synth_b");
    write_dataset(generate(s), a);
    write_dataset(generate(s), b);
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(a)) {
        ++files;
        CHECK(testsupport::slurp(e.path()) == testsupport::slurp(b / e.path().filename()));
    }
    CHECK(files > 8);
    CHECK_FALSE(std::filesystem::exists(a / "yield_2012.csv"));
    CHECK(std::filesystem::exists(a / "yield_2013.csv"));
    const auto truth = nlohmann::json::parse(testsupport::slurp(a / "truth.json"));
    CHECK(truth["rho"].size() == 9);
    CHECK(truth["gap_year"] == 2012);

    auto other = s;
    other.seed = 4;
    CHECK(generate(other).z != generate(s).z);
}

TEST_CASE("simulated series match AR(1) moments") {
    Eigen::VectorXd rho(3);
    rho << -0.5, 0.3, 0.8;
    // A single T = 200 series has sampling sd up to about 0.06 at these rho, so the 0.05
    // tolerance is applied to the average over independent replicate series.
    auto lag1 = [](const Eigen::RowVectorXd& x) {
        const double m = x.mean();
        double num = 0, den = 0;
        for (Eigen::Index t = 0; t < x.size(); ++t) {
            den += (x(t) - m) * (x(t) - m);
            if (t) num += (x(t) - m) * (x(t - 1) - m);
        }
        return num / den;
    };
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(3);
    for (std::uint64_t rep = 0; rep < 40; ++rep) {
        const auto z = simulate_ar1(rho, 0.5, 200, 100 + rep);
        for (int i = 0; i < 3; ++i) avg(i) += lag1(z.row(i)) / 40.0;
    }
    for (int i = 0; i < 3; ++i) CHECK(std::abs(avg(i) - rho(i)) < 0.05);
    const auto longer = simulate_ar1(rho, 0.5, 10000, 12);
    for (int i = 0; i < 3; ++i) {
        const double m = longer.row(i).mean();
        const double var = (longer.row(i).array() - m).square().sum() / 9999.0;
        const double target = 0.5 / (1 - rho(i) * rho(i));
        CHECK(std::abs(var / target - 1.0) < 0.05);
    }
}

TEST_CASE("aggregating by the true labels recovers the group signal") {
    auto s = small_spec();
    s.cell_noise_sd = 0.05;
    const auto d = generate(s);
    const auto grouped = aggregate_groups(log_transform(d.panel), d.groups);
    const auto sizes = d.groups.group_sizes();
    for (std::size_t t = 0; t < d.years.size(); ++t)
        for (std::size_t i = 0; i < 9; ++i) {
            const double signal = d.trend[t] + d.mean_offset(static_cast<Eigen::Index>(i)) +
                                  d.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
            const double se = s.cell_noise_sd / std::sqrt(static_cast<double>(sizes[i]));
            CHECK(std::abs(grouped.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) - signal) < 4 * se);
        }
}

TEST_CASE("layouts and presets") {
    auto s = small_spec();
    s.layout = SynthSpec::Layout::voronoi;
    s.n_groups = 7;
    s.rho_surface = SynthSpec::RhoSurface::prior;
    const auto d = generate(s);
    for (auto n : d.groups.group_sizes()) CHECK(n > 0);
    CHECK((d.rho.array() >= s.rho_min).all());
    CHECK((d.rho.array() <= s.rho_max).all());

    const auto p = SynthSpec::inhomogeneous(5);
    CHECK(p.layout == SynthSpec::Layout::voronoi);
    CHECK_NOTHROW(p.validate());

    const auto lattice = smooth_lattice_rho(5, 0.2, 0.8);
    CHECK(lattice(0) == doctest::Approx(0.2));
    CHECK(lattice(24) == doctest::Approx(0.8));
}

TEST_CASE("invalid specs are rejected") {
    auto s = small_spec();
    s.n_groups = 8;  // not square for blocks
    CHECK_THROWS_AS(generate(s), ValidationError);
    s = small_spec();
    s.sigma2 = 0.0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = small_spec();
    s.rho_max = 1.0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = small_spec();
    s.gap_year = s.first_year;
    CHECK_THROWS_AS(s.validate(), ValidationError);
}
