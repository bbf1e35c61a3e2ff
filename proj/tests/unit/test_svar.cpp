#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aggregate.hpp"
#include "error.hpp"
#include "svar.hpp"
#include "synth.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace yieldcast;

namespace {

NormalizedPanel panel_of(const Eigen::MatrixXd& z) {
    NormalizedPanel p;
    p.z = z;
    for (Eigen::Index t = 0; t < z.cols(); ++t) {
        p.years.push_back(2000 + static_cast<int>(t));
        p.observed.push_back(1);
    }
    p.trend.assign(p.years.size(), 0.0);
    return p;
}

NeighborMatrix lattice(std::size_t b) {
    return block_neighbors(block_partition(GridGeometry{0, 0, 1, b, b}, b));
}

SvarConfig small(std::uint64_t seed = 1) {
    SvarConfig c;
    c.n_iter = 3000;
    c.burn_in = 1000;
    c.thin = 4;
    c.n_chains = 2;
    c.seed = seed;
    return c;
}

// Brute-force conditional of one column of an n x T AR(1) panel given all other entries.
void schur_oracle(const Eigen::MatrixXd& z, const Eigen::VectorXd& rho, double sigma2, int m, Eigen::VectorXd& mean,
                  Eigen::VectorXd& var) {
    const int n = static_cast<int>(z.rows()), T = static_cast<int>(z.cols()), N = n * T;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < T; ++s)
            for (int t = 0; t < T; ++t) g(i * T + s, i * T + t) = sigma2 * std::pow(rho(i), std::abs(s - t)) / (1 - rho(i) * rho(i));
    std::vector<int> mi, oi;
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) (t == m ? mi : oi).push_back(i * T + t);
    Eigen::MatrixXd smo(mi.size(), oi.size()), soo(oi.size(), oi.size());
    Eigen::VectorXd zo(oi.size());
    for (std::size_t a = 0; a < mi.size(); ++a)
        for (std::size_t b = 0; b < oi.size(); ++b) smo(a, b) = g(mi[a], oi[b]);
    for (std::size_t a = 0; a < oi.size(); ++a) {
        zo(a) = z(oi[a] / T, oi[a] % T);
        for (std::size_t b = 0; b < oi.size(); ++b) soo(a, b) = g(oi[a], oi[b]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(soo);
    mean = smo * ldlt.solve(zo);
    const Eigen::MatrixXd cov = -smo * ldlt.solve(smo.transpose());
    var.resize(n);
    for (int i = 0; i < n; ++i) var(i) = g(mi[i], mi[i]) + cov(i, i);
}

}  // namespace

TEST_CASE("car_covariance") {
    const auto r = lattice(3);
    const auto omega0 = car_covariance(2.5, 0.0, r);
    CHECK((omega0.array() == (2.5 * Eigen::MatrixXd::Identity(9, 9)).array()).all());

    // Two neighbours, lambda 0.5: Q = [[1, -0.5], [-0.5, 1]], inverse by the 2x2 formula.
    const auto omega = car_covariance(1.0, 0.5, exchangeable_neighbors(2));
    const double det = 1.0 - 0.25;
    CHECK(omega(0, 0) == doctest::Approx(1.0 / det).epsilon(1e-12));
    CHECK(omega(0, 1) == doctest::Approx(0.5 / det).epsilon(1e-12));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 0.99);
    for (int k = 0; k < 10; ++k) {
        const auto om = car_covariance(0.1 + u(rng), u(rng), lattice(4));
        CHECK((om - om.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(om);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
    CarPrecision q(to_real(lattice(3).r), 0.7);
    CHECK((q.inverse().diagonal() - q.inverse_diagonal()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(q.log_det() == doctest::Approx(std::log(q.matrix().determinant())).epsilon(1e-10));
    // lambda = 1 would make Q singular for a graph with an isolated node.
    CHECK_THROWS_AS(CarPrecision(Eigen::MatrixXd::Zero(2, 2), 1.0), ValidationError);
}

TEST_CASE("copula transform") {
    CHECK(copula_transform(0.0, 2.0) == 0.0);
    CHECK(copula_transform(50.0, 1.0) > 0.999999);
    CHECK(copula_transform(1e6, 1.0) < 1.0);
    CHECK(copula_transform(-1e6, 1.0) > -1.0);
    const double q75 = std::numbers::sqrt2 * boost::math::erf_inv(0.5);  // standard normal 0.75 quantile
    CHECK(copula_transform(std::sqrt(3.0) * q75, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
    double prev = -1.0;
    for (double e = -5; e <= 5; e += 0.25) {
        const double r = copula_transform(e, 1.3);
        CHECK(r > prev);
        prev = r;
        CHECK(copula_inverse(r, 1.3) == doctest::Approx(e).epsilon(1e-9));
    }
}

TEST_CASE("log likelihood") {
    Eigen::MatrixXd z(2, 4);
    Eigen::VectorXd rho(2);
    rho << 0.5, -0.3;
    for (int i = 0; i < 2; ++i) {
        z(i, 0) = 1.0 + i;
        for (int t = 1; t < 4; ++t) z(i, t) = rho(i) * z(i, t - 1);
    }
    const double s2 = 0.37;
    CHECK(log_likelihood(z, rho, s2) == doctest::Approx(-(2 * 3 / 2.0) * std::log(2 * std::numbers::pi * s2)).epsilon(1e-13));

    Eigen::MatrixXd one(1, 2);
    one << 1.0, 0.5;
    CHECK(log_likelihood(one, Eigen::VectorXd::Constant(1, 0.5), 1.0) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));

    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd r(3, 6);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = n(rng);
    Eigen::VectorXd rr(3);
    rr << 0.1, 0.5, -0.4;
    Eigen::MatrixXd swapped = r;
    swapped.row(0) = r.row(2);
    swapped.row(2) = r.row(0);
    Eigen::VectorXd rs = rr;
    std::swap(rs(0), rs(2));
    CHECK(log_likelihood(swapped, rs, 0.8) == doctest::Approx(log_likelihood(r, rr, 0.8)).epsilon(1e-13));

    // Unimodal in sigma2 around the residual-variance MLE.
    double ssr = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int t = 1; t < 6; ++t) ssr += std::pow(r(i, t) - rr(i) * r(i, t - 1), 2);
    const double mle = ssr / 15.0;
    double prev = -INFINITY;
    for (int k = 2; k <= 9; ++k) {
        const double v = log_likelihood(r, rr, 0.1 * k * mle);
        CHECK(v > prev);
        prev = v;
    }
    CHECK(log_likelihood(r, rr, mle) > prev);
    prev = log_likelihood(r, rr, mle);
    for (int k = 12; k <= 40; k += 3) {
        const double v = log_likelihood(r, rr, 0.1 * k * mle);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("imputation matches the brute-force conditional") {
    const auto indep = imputation_moments(0.7, -0.2, 0.0, 1.3);
    CHECK(indep.mean == 0.0);
    CHECK(indep.variance == 1.3);
    const auto near_one = imputation_moments(1.0, 3.0, 0.999, 1.0);
    CHECK(std::abs(near_one.mean - 2.0) < 1e-3);

    Eigen::MatrixXd z(1, 5);
    z << 0.3, -0.1, 0.8, 0.25, -0.6;
    Eigen::VectorXd rho = Eigen::VectorXd::Constant(1, 0.6);
    Eigen::VectorXd mean, var;
    schur_oracle(z, rho, 1.0, 2, mean, var);
    const auto m = imputation_moments(z(0, 1), z(0, 3), 0.6, 1.0);
    CHECK(std::abs(m.mean - mean(0)) < 1e-10);
    CHECK(std::abs(m.variance - var(0)) < 1e-10);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ur(-0.9, 0.9), us(0.2, 2.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const int T = 3 + rep % 6, groups = 1 + rep % 3, gap = 1 + rep % (T - 2);
        Eigen::MatrixXd zz(groups, T);
        for (Eigen::Index i = 0; i < zz.size(); ++i) zz(i) = n(rng);
        Eigen::VectorXd rr(groups);
        for (int i = 0; i < groups; ++i) rr(i) = ur(rng);
        const double s2 = us(rng);
        schur_oracle(zz, rr, s2, gap, mean, var);
        for (int i = 0; i < groups; ++i) {
            const auto mm = imputation_moments(zz(i, gap - 1), zz(i, gap + 1), rr(i), s2);
            CHECK(std::abs(mm.mean - mean(i)) < 1e-10);
            CHECK(std::abs(mm.variance - var(i)) < 1e-10);
        }
    }

    Rng g(1);
    CHECK_THROWS_AS(impute_missing(z, rho, 1.0, 0, g), ValidationError);
    CHECK_THROWS_AS(impute_missing(z, rho, 1.0, 4, g), ValidationError);
    const auto draw = impute_missing(z, rho, 1.0, 2, g);
    CHECK(draw.size() == 1);
}

TEST_CASE("mcmc: draw count, reproducibility and validation") {
    const Eigen::VectorXd truth = smooth_lattice_rho(3, 0.2, 0.8);
    const auto z = simulate_ar1(truth, 0.02, 8, 3);
    const auto cfg = small(5);
    const auto a = mcmc_run(panel_of(z), lattice(3), cfg);
    CHECK(a.n_draws() == cfg.n_chains * (cfg.n_iter - cfg.burn_in) / cfg.thin);
    CHECK((a.rho.array().abs() < 1.0).all());
    CHECK((a.sigma2.array() > 0.0).all());
    CHECK((a.lambda.array() > 0.0).all());
    CHECK((a.lambda.array() < 1.0).all());
    const auto b = mcmc_run(panel_of(z), lattice(3), cfg);
    CHECK((a.rho.array() == b.rho.array()).all());
    CHECK((a.sigma2.array() == b.sigma2.array()).all());
    for (const auto& key : {"sigma2", "lambda", "tau2", "rho[0]"}) CHECK(a.rhat.count(key) == 1);

    // A chain run alone reproduces the same chain inside the merged run.
    const auto c1 = mcmc_chain(panel_of(z), lattice(3), cfg, 1);
    const auto per = static_cast<Eigen::Index>(cfg.retained_per_chain());
    CHECK((c1.rho.array() == a.rho.bottomRows(per).array()).all());

    CHECK_THROWS_AS(mcmc_run(panel_of(z), lattice(2), cfg), ValidationError);
    CHECK_THROWS_AS(mcmc_run(panel_of(z.leftCols(2)), lattice(3), cfg), ValidationError);
    auto bad = cfg;
    bad.burn_in = bad.n_iter;
    CHECK_THROWS_AS(mcmc_run(panel_of(z), lattice(3), bad), ValidationError);
    auto gap = panel_of(z);
    gap.observed[0] = 0;
    CHECK_THROWS_AS(mcmc_run(gap, lattice(3), cfg), ValidationError);
}

TEST_CASE("mcmc: a single group agrees with the OLS AR coefficient") {
    const auto z = simulate_ar1(Eigen::VectorXd::Constant(1, 0.6), 1.0, 50, 21);
    auto cfg = small(3);
    cfg.n_iter = 8000;
    cfg.burn_in = 2000;
    const auto post = mcmc_run(panel_of(z), neighbors_from_matrix(Eigen::MatrixXi::Zero(1, 1)), cfg);
    double sxy = 0, sxx = 0;
    for (int t = 1; t < 50; ++t) {
        sxy += z(0, t) * z(0, t - 1);
        sxx += z(0, t - 1) * z(0, t - 1);
    }
    const double ols = sxy / sxx;
    const double mean = post.rho.col(0).mean();
    const double sd = std::sqrt((post.rho.col(0).array() - mean).square().mean());
    CHECK(std::abs(mean - ols) < 2 * sd);
}

TEST_CASE("mcmc: all-zero data runs to completion") {
    const auto post = mcmc_run(panel_of(Eigen::MatrixXd::Zero(4, 6)), lattice(2), small(2));
    CHECK(post.sigma2.allFinite());
    CHECK(post.sigma2.mean() < 1.0);
}

TEST_CASE("mcmc: gap years are imputed") {
    const Eigen::VectorXd truth = Eigen::VectorXd::Constant(4, 0.8);
    const auto z = simulate_ar1(truth, 0.02, 8, 9);
    auto p = panel_of(z);
    p.observed[3] = 0;
    p.observed[4] = 0;  // adjacent gaps
    p.z.col(3).setConstant(NAN);
    p.z.col(4).setConstant(NAN);
    const auto post = mcmc_run(p, lattice(2), small(4));
    CHECK(post.gap_years == std::vector<int>{2003, 2004});
    CHECK(post.z_missing.cols() == 8);
    CHECK(post.z_missing.allFinite());
}

TEST_CASE("split R-hat") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::vector<double>> same(4, std::vector<double>(500));
    for (auto& c : same)
        for (auto& v : c) v = n(rng);
    CHECK(split_rhat(same) == doctest::Approx(1.0).epsilon(0.02));
    auto shifted = same;
    for (auto& v : shifted[0]) v += 5.0;
    CHECK(split_rhat(shifted) > 1.5);
}

namespace {

SvarPosterior constant_posterior(std::size_t draws, std::size_t n, double rho, double sigma2) {
    SvarPosterior p;
    p.n_groups = n;
    p.rho = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(draws), static_cast<Eigen::Index>(n), rho);
    p.sigma2 = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(draws), sigma2);
    return p;
}

}  // namespace

TEST_CASE("forecast") {
    const auto det = forecast(constant_posterior(50, 3, 0.5, 1e-300), Eigen::VectorXd::Constant(3, 2.0), 1);
    CHECK((det.draws.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(det.mean(0) == doctest::Approx(1.0));

    const auto a = forecast(constant_posterior(400, 2, 0.0, 0.5), Eigen::VectorXd::Constant(2, 3.0), 7);
    const auto b = forecast(constant_posterior(400, 2, 0.0, 0.5), Eigen::VectorXd::Constant(2, -8.0), 7);
    CHECK((a.draws.array() == b.draws.array()).all());

    const auto narrow = forecast(constant_posterior(400, 2, 0.3, 0.1), Eigen::VectorXd::Constant(2, 1.0), 7);
    const auto wide = forecast(constant_posterior(400, 2, 0.3, 0.4), Eigen::VectorXd::Constant(2, 1.0), 7);
    for (int i = 0; i < 2; ++i) {
        CHECK(wide.upper(i) - wide.lower(i) > narrow.upper(i) - narrow.lower(i));
        CHECK(narrow.lower(i) <= narrow.median(i));
        CHECK(narrow.median(i) <= narrow.upper(i));
    }

    // Shifting Z_last by c shifts every draw by rho_draw * c.
    auto post = constant_posterior(100, 2, 0.0, 0.2);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (Eigen::Index i = 0; i < post.rho.size(); ++i) post.rho(i) = u(rng);
    Eigen::VectorXd z(2);
    z << 0.4, -1.1;
    const double c = 0.75;
    const auto f0 = forecast(post, z, 11);
    const auto f1 = forecast(post, (z.array() + c).matrix(), 11);
    CHECK(((f1.draws - f0.draws) - post.rho * c).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(forecast(constant_posterior(0, 2, 0.1, 0.1), z, 1), ValidationError);
    CHECK_THROWS_AS(forecast(post, Eigen::VectorXd::Zero(3), 1), ValidationError);
}

TEST_CASE("disaggregate") {
    const GridGeometry g{0, 0, 1, 2, 2};
    const auto singles = block_partition(g, 2);
    const auto r = disaggregate({1.0, 2.0, 3.0, 4.0}, singles);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.value(i) == 1.0 + i);

    const auto blocks = block_partition(GridGeometry{0, 0, 1, 6, 6}, 3);
    std::vector<double> c(9, 12.5);
    const auto flat = disaggregate(c, blocks);
    for (std::size_t i = 0; i < 36; ++i) CHECK(flat.value(i) == 12.5);

    std::vector<double> v{0.1, -0.3, 0.7, 1.2, 2.0, -1.0, 0.0, 0.5, 0.9};
    std::vector<double> e;
    for (double x : v) e.push_back(std::exp(x));
    const auto raster = disaggregate(e, blocks);
    YieldPanel p;
    p.geometry = raster.geometry();
    p.years = {2020, 2021};
    p.rasters = {raster.renamed("yield", "2020"), raster.renamed("yield", "2021")};
    const auto grouped = aggregate_groups(log_transform(p), blocks);
    for (int i = 0; i < 9; ++i) CHECK(std::abs(grouped.values(i, 0) - v[i]) < 1e-12);

    auto holey = blocks;
    holey.labels[0] = -1;
    CHECK_FALSE(disaggregate(c, holey).present(0));
    CHECK_THROWS_AS(disaggregate({1.0}, blocks), ValidationError);
}

TEST_CASE("epsilon policy parsing") {
    CHECK(EpsilonPolicy::parse("auto").kind == EpsilonPolicy::Kind::automatic);
    CHECK(EpsilonPolicy::parse("2xauto").multiple == 2.0);
    CHECK(EpsilonPolicy::parse("2xauto").label() == "2xauto");
    CHECK(EpsilonPolicy::parse("1.5").value == 1.5);
    CHECK(EpsilonPolicy::parse("complete").label() == "complete");
    CHECK(EpsilonPolicy::parse("exchangeable").kind == EpsilonPolicy::Kind::exchangeable);
    CHECK_THROWS_AS(EpsilonPolicy::parse("-1"), ValidationError);
    CHECK_THROWS_AS(EpsilonPolicy::parse("near"), ValidationError);
}
