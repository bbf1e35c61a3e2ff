#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "error.hpp"
#include "trend.hpp"

#include <cmath>
#include <random>

using namespace yieldcast;

namespace {

WeatherTable weather_for(int first, int last, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::map<int, WeatherRow> rows;
    for (int y = first; y <= last; ++y) rows[y] = {180 + 30 * n(rng), 400 + 20 * n(rng), 12 + 2 * n(rng), 0.3 + 0.05 * n(rng)};
    return WeatherTable(rows);
}

std::vector<int> years(int first, int last) {
    std::vector<int> y;
    for (int t = first; t <= last; ++t) y.push_back(t);
    return y;
}

}  // namespace

TEST_CASE("exact linear trend in year is recovered") {
    const auto w = weather_for(2001, 2010);
    const auto yr = years(2001, 2010);
    std::vector<double> resp;
    for (int y : yr) resp.push_back(2.3 + 0.015 * (y - 2001));
    const auto m = fit_trend_series(yr, resp, w, {{Predictor::year}});
    CHECK(m.coefficients[1] == doctest::Approx(0.015).epsilon(1e-10));
    CHECK(m.coefficients[0] + 0.015 * 2001 == doctest::Approx(2.3).epsilon(1e-10));
    for (std::size_t t = 0; t < yr.size(); ++t) CHECK(std::abs(m.fitted[t] - resp[t]) < 1e-10);
    CHECK(std::abs(m.predict(2011, weather_for(2001, 2011)) - (2.3 + 0.015 * 10)) < 1e-10);
}

TEST_CASE("ties go to the smaller predictor set") {
    const auto w = weather_for(2001, 2010, 4);
    const auto yr = years(2001, 2010);
    std::vector<double> resp;
    for (int y : yr) resp.push_back(2.0 * w.row(y).rt);
    const auto m = fit_trend_series(yr, resp, w, {{Predictor::rt, Predictor::pet}, {Predictor::rt}});
    CHECK(m.predictors == PredictorSet{Predictor::rt});
    CHECK(m.scores.size() == 2);
}

TEST_CASE("residuals are orthogonal to the selected predictors") {
    const auto w = weather_for(2001, 2012, 6);
    const auto yr = years(2001, 2012);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 0.05);
    std::vector<double> resp;
    for (int y : yr) resp.push_back(2.0 + 0.01 * (y - 2001) + 0.002 * (w.row(y).rt - 180) + n(rng));
    const PredictorSet set{Predictor::year, Predictor::rt, Predictor::pet};
    const auto m = fit_trend_series(yr, resp, w, {set});
    double sum_res = 0.0;
    for (std::size_t t = 0; t < yr.size(); ++t) sum_res += resp[t] - m.fitted[t];
    CHECK(std::abs(sum_res) < 1e-8);
    for (auto p : set) {
        double mean = 0.0;
        for (int y : yr) mean += p == Predictor::year ? y : (p == Predictor::rt ? w.row(y).rt : w.row(y).pet);
        mean /= static_cast<double>(yr.size());
        double dot = 0.0;
        for (std::size_t t = 0; t < yr.size(); ++t) {
            const int y = yr[t];
            const double x = p == Predictor::year ? y : (p == Predictor::rt ? w.row(y).rt : w.row(y).pet);
            dot += (x - mean) * (resp[t] - m.fitted[t]);
        }
        CHECK(std::abs(dot) < 1e-8);
    }
}

TEST_CASE("rank-deficient candidates are never selected") {
    std::map<int, WeatherRow> rows;
    for (int y = 2001; y <= 2008; ++y) rows[y] = {100.0 + y, 400.0, 12.0, 0.3};  // PET constant
    const WeatherTable w(rows);
    const auto yr = years(2001, 2008);
    std::vector<double> resp;
    for (int y : yr) resp.push_back(0.5 + 0.1 * (y - 2001) + (y % 2) * 0.01);
    const auto m = fit_trend_series(yr, resp, w, {{Predictor::year, Predictor::pet}, {Predictor::year, Predictor::rt}, {Predictor::year}});
    for (const auto& s : m.scores)
        if (s.selected) CHECK_FALSE(s.rank_deficient);
    CHECK(m.scores[0].rank_deficient);
    CHECK(m.scores[1].rank_deficient);  // RT collinear with year
    CHECK(m.predictors == PredictorSet{Predictor::year});
    CHECK_THROWS_AS(fit_trend_series(yr, resp, w, {{Predictor::year, Predictor::pet}}), NumericalError);
}

TEST_CASE("fit_trend preconditions") {
    const auto w = weather_for(2001, 2010);
    CHECK_THROWS_AS(fit_trend_series(years(2001, 2003), {1, 2, 3}, w, {{Predictor::year}}), ValidationError);
    CHECK_THROWS_AS(fit_trend_series(years(2001, 2004), {1, 2, 3, 5}, w,
                                     {{Predictor::year, Predictor::rt, Predictor::pet}}),
                    ValidationError);
    CHECK(default_trend_candidates().size() == 16);
    for (const auto& c : default_trend_candidates()) CHECK(c.front() == Predictor::year);
    CHECK(default_trend_candidates(6).size() == 15);
    CHECK(to_string(parse_predictor_set("sd+year+pet+rt")) == "year+rt+pet+sd");
    CHECK_THROWS_AS(parse_predictor_set("year+rain"), ValidationError);
}

TEST_CASE("detrend and retrend") {
    const auto w = weather_for(2010, 2016);
    GroupedPanel g;
    g.years = years(2010, 2015);
    g.observed = {1, 1, 1, 0, 1, 1};
    g.values.resize(2, 6);
    for (int t = 0; t < 6; ++t) {
        g.values(0, t) = 2.0 + 0.05 * t;
        g.values(1, t) = 2.0 + 0.05 * t + 0.1;
    }
    g.values.col(3).setConstant(NAN);
    const auto model = fit_trend(g, w, {{Predictor::year}});
    const auto z = detrend(g, model, w);
    for (int t : {0, 1, 2, 4, 5}) {
        CHECK(std::abs(z.z(0, t) + 0.05) < 1e-12);
        CHECK(std::abs(z.z(1, t) - 0.05) < 1e-12);
    }
    CHECK_FALSE(z.observed[3]);
    const auto back = retrend_log(z);
    for (int t : {0, 1, 2, 4, 5}) CHECK(std::abs(back(1, t) - g.values(1, t)) < 1e-12);

    auto level = TrendModel::from_coefficients({}, {std::log(10.0)});
    CHECK(retrend({0.0}, level, 2016, w)[0] == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(retrend({-std::log(10.0)}, level, 2016, w)[0] == doctest::Approx(1.0).epsilon(1e-14));
    std::vector<double> zs;
    for (int i = 0; i < 25; ++i) zs.push_back(0.01 * i);
    const auto ys = retrend(zs, level, 2016, w);
    for (int i = 1; i < 25; ++i) CHECK(ys[i] > ys[i - 1]);
    // detrend then retrend, and retrend of a detrended value, are inverses.
    const double tr = model.predict(2016, w);
    CHECK(std::abs(std::log(retrend({0.3 - tr}, model, 2016, w)[0]) - 0.3) < 1e-12);
    const auto slope_model = TrendModel::from_coefficients({Predictor::rt}, {0.0, 0.001});
    CHECK_THROWS_AS(retrend({0.0}, slope_model, 2020, w), ValidationError);
}
