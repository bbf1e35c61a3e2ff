#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "error.hpp"
#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace yieldcast;

TEST_CASE("perfect fit and mean predictor") {
    const std::vector<double> y{10.2, 11.5, 9.8, 12.0};
    const auto p = compute_metrics(y, y);
    CHECK(p.r2 == 1.0);
    CHECK(p.mspe == 0.0);
    CHECK(p.mape == 0.0);
    CHECK(p.predicted_average == doctest::Approx(10.875));
    CHECK(p.n == 4);

    const std::vector<double> mean(4, 10.875);
    CHECK(std::abs(compute_metrics(y, mean).r2) < 1e-12);
}

TEST_CASE("hand-computed example") {
    const auto r = compute_metrics({1, 2, 3}, {1, 2, 5});
    CHECK(std::abs(r.mspe - 4.0 / 3.0) < 1e-12);
    CHECK(std::abs(r.mape - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(r.r2 + 1.0) < 1e-12);
    CHECK(std::abs(r.predicted_average - 8.0 / 3.0) < 1e-12);
}

TEST_CASE("metric preconditions") {
    CHECK_THROWS_WITH_AS(compute_metrics({2, 2, 2}, {1, 2, 3}), doctest::Contains("constant observations"),
                         ValidationError);
    CHECK_THROWS_AS(compute_metrics({1, 2}, {1, 2, 3}), ValidationError);
    CHECK_THROWS_AS(compute_metrics({1}, {1}), ValidationError);
}

TEST_CASE("invariances") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(11.0, 1.0);
    std::vector<double> y(30), p(30);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = n(rng);
        p[i] = y[i] + 0.3 * (n(rng) - 11.0);
    }
    const auto base = compute_metrics(y, p);
    CHECK(base.mape * base.mape <= base.mspe);
    CHECK(base.mspe >= 0.0);

    auto ys = y, ps = p;
    for (auto& v : ys) v += 3.7;
    for (auto& v : ps) v += 3.7;
    CHECK(compute_metrics(ys, ps).r2 == doctest::Approx(base.r2).epsilon(1e-12));

    std::vector<std::size_t> perm(y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> yp, pp;
    for (auto i : perm) {
        yp.push_back(y[i]);
        pp.push_back(p[i]);
    }
    const auto shuffled = compute_metrics(yp, pp);
    CHECK(shuffled.r2 == doctest::Approx(base.r2).epsilon(1e-12));
    CHECK(shuffled.mspe == doctest::Approx(base.mspe).epsilon(1e-12));
    CHECK(shuffled.mape == doctest::Approx(base.mape).epsilon(1e-12));
}

TEST_CASE("comparison table formatting") {
    MetricReport r;
    r.method = "clustering";
    r.n_groups = 25;
    r.r2 = 0.81;
    r.mspe = 0.1414;
    r.mape = 0.3222;
    r.predicted_average = 11.7171;
    const auto table = comparison_table({r});
    CHECK(table.find("Clustering") != std::string::npos);
    CHECK(table.find("81  ") != std::string::npos);
    const auto a = table.find("81 "), b = table.find("0.141"), c = table.find("0.322"), d = table.find("11.717");
    CHECK(a < b);
    CHECK(b < c);
    CHECK(c < d);
    CHECK(d != std::string::npos);
    // One header, one rule and one data row.
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);

    CHECK(format_percent(0.8125) == "81.25");
    CHECK(format_percent(-0.5) == "-50");
    CHECK(format_metric(0.1) == "0.100");

    MetricReport big = r;
    big.n_groups = 64;
    const auto sorted = sort_reports({big, r});
    CHECK(sorted[0].n_groups == 25);
    CHECK(sorted[1].n_groups == 64);
    MetricReport blk = r;
    blk.method = "blocking";
    const auto mixed = sort_reports({blk, r});
    CHECK(mixed[0].method == "clustering");

    const auto csv = comparison_csv({big, r}, true);
    CHECK(csv.rfind("method,model,n_groups,epsilon,r2,mspe,mape,predicted_average,flags\n", 0) == 0);
    CHECK(csv.find("clustering,SVAR,25,") < csv.find("clustering,SVAR,64,"));
}
