#include "trend.hpp"

#include "csv.hpp"
#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace yieldcast {

std::string to_string(Predictor p) {
    switch (p) {
        case Predictor::year: return "year";
        case Predictor::rt: return "rt";
        case Predictor::pet: return "pet";
        case Predictor::sd: return "sd";
        case Predictor::sa: return "sa";
    }
    return "?";
}

std::string to_string(const PredictorSet& set) {
    if (set.empty()) return "1";
    std::string out;
    for (auto p : set) out += (out.empty() ? "" : "+") + to_string(p);
    return out;
}

PredictorSet parse_predictor_set(const std::string& text) {
    PredictorSet out;
    if (csv::trim(text) == "1") return out;
    for (const auto& tok : csv::split(text, '+')) {
        std::string t = tok;
        std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        Predictor p;
        if (t == "year") p = Predictor::year;
        else if (t == "rt") p = Predictor::rt;
        else if (t == "pet") p = Predictor::pet;
        else if (t == "sd") p = Predictor::sd;
        else if (t == "sa") p = Predictor::sa;
        else throw ValidationError("unknown trend predictor '" + tok + "'");
        if (std::find(out.begin(), out.end(), p) != out.end())
            throw ValidationError("predictor '" + tok + "' listed twice");
        out.push_back(p);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PredictorSet> default_trend_candidates() {
    const Predictor weather[] = {Predictor::rt, Predictor::pet, Predictor::sd, Predictor::sa};
    std::vector<PredictorSet> out;
    for (unsigned mask = 0; mask < 16; ++mask) {
        PredictorSet s{Predictor::year};
        for (unsigned b = 0; b < 4; ++b)
            if (mask & (1u << b)) s.push_back(weather[b]);
        out.push_back(s);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
    return out;
}

std::vector<PredictorSet> default_trend_candidates(std::size_t n_years) {
    auto out = default_trend_candidates();
    std::erase_if(out, [n_years](const PredictorSet& s) { return s.size() + 1 >= n_years; });
    return out;
}

namespace {

double predictor_value(Predictor p, int year, const WeatherTable& weather) {
    if (p == Predictor::year) return static_cast<double>(year);
    const auto& w = weather.row(year);
    switch (p) {
        case Predictor::rt: return w.rt;
        case Predictor::pet: return w.pet;
        case Predictor::sd: return w.sd;
        case Predictor::sa: return w.sa;
        case Predictor::year: break;
    }
    return 0.0;
}

struct OlsFit {
    bool rank_deficient = false;
    std::vector<double> mean, scale, gamma;
    Eigen::VectorXd fitted;
    double in_sample_mse = 0.0;
    double loocv_mse = 0.0;
};

OlsFit ols(const Eigen::MatrixXd& raw, const Eigen::VectorXd& y) {
    const auto n = raw.rows();
    const auto p = raw.cols();
    OlsFit fit;
    Eigen::MatrixXd x(n, p + 1);
    x.col(0).setOnes();
    for (Eigen::Index j = 0; j < p; ++j) {
        const double m = raw.col(j).mean();
        const double s = std::sqrt((raw.col(j).array() - m).square().sum() / static_cast<double>(n));
        fit.mean.push_back(m);
        fit.scale.push_back(s > 0.0 ? s : 1.0);
        if (!(s > 0.0)) fit.rank_deficient = true;  // constant column duplicates the intercept
        x.col(j + 1) = (raw.col(j).array() - m) / fit.scale.back();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (fit.rank_deficient || qr.rank() < p + 1) {
        fit.rank_deficient = true;
        return fit;
    }
    const Eigen::VectorXd gamma = qr.solve(y);
    fit.gamma.assign(gamma.data(), gamma.data() + gamma.size());
    fit.fitted = x * gamma;
    const Eigen::VectorXd resid = y - fit.fitted;
    fit.in_sample_mse = resid.squaredNorm() / static_cast<double>(n);

    // Leverages from the thin Q factor.
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p + 1);
    double loo = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = q.row(i).squaredNorm();
        const double denom = 1.0 - h;
        if (denom < 1e-12) {
            loo = std::numeric_limits<double>::infinity();
            break;
        }
        const double e = resid(i) / denom;
        loo += e * e;
    }
    fit.loocv_mse = loo / static_cast<double>(n);
    return fit;
}

bool nearly_tied(double a, double b) {
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)) + 1e-20;
}

}  // namespace

double TrendModel::predict(int year, const WeatherTable& weather) const {
    double v = standardized_coefficients.at(0);
    for (std::size_t j = 0; j < predictors.size(); ++j)
        v += standardized_coefficients[j + 1] * (predictor_value(predictors[j], year, weather) - column_mean[j]) /
             column_scale[j];
    return v;
}

TrendModel TrendModel::from_coefficients(PredictorSet predictors, std::vector<double> coefficients) {
    if (coefficients.size() != predictors.size() + 1)
        throw ValidationError("trend model needs one coefficient per predictor plus an intercept");
    TrendModel m;
    m.predictors = std::move(predictors);
    m.coefficients = coefficients;
    m.standardized_coefficients = std::move(coefficients);
    m.column_mean.assign(m.predictors.size(), 0.0);
    m.column_scale.assign(m.predictors.size(), 1.0);
    return m;
}

TrendModel fit_trend_series(const std::vector<int>& years, const std::vector<double>& response,
                            const WeatherTable& weather, const std::vector<PredictorSet>& candidates) {
    if (years.size() != response.size()) throw ValidationError("trend: years and response differ in length");
    if (years.size() < 4) throw ValidationError("trend fitting needs at least 4 observed years, got " + std::to_string(years.size()));
    if (candidates.empty()) throw ValidationError("no trend candidates given");
    const auto n = static_cast<Eigen::Index>(years.size());
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = response[static_cast<std::size_t>(i)];

    TrendModel best;
    std::optional<std::size_t> best_idx;
    std::vector<OlsFit> fits;
    for (const auto& cand : candidates) {
        if (static_cast<Eigen::Index>(cand.size()) + 2 > n)
            throw ValidationError("trend candidate " + to_string(cand) + " leaves no residual degree of freedom with " +
                                  std::to_string(n) + " years");
        Eigen::MatrixXd raw(n, static_cast<Eigen::Index>(cand.size()));
        for (Eigen::Index i = 0; i < n; ++i)
            for (std::size_t j = 0; j < cand.size(); ++j)
                raw(i, static_cast<Eigen::Index>(j)) = predictor_value(cand[j], years[static_cast<std::size_t>(i)], weather);
        fits.push_back(ols(raw, y));
        const auto& f = fits.back();
        CandidateScore sc;
        sc.predictors = cand;
        sc.rank_deficient = f.rank_deficient;
        sc.in_sample_mse = f.rank_deficient ? std::numeric_limits<double>::quiet_NaN() : f.in_sample_mse;
        sc.loocv_mse = f.rank_deficient ? std::numeric_limits<double>::quiet_NaN() : f.loocv_mse;
        best.scores.push_back(sc);
        if (f.rank_deficient) continue;
        const std::size_t idx = best.scores.size() - 1;
        if (!best_idx) {
            best_idx = idx;
            continue;
        }
        const auto& cur = best.scores[*best_idx];
        if (nearly_tied(sc.loocv_mse, cur.loocv_mse)) {
            if (cand.size() < cur.predictors.size()) best_idx = idx;
        } else if (sc.loocv_mse < cur.loocv_mse) {
            best_idx = idx;
        }
    }
    if (!best_idx) throw NumericalError("rank-deficient design for every trend candidate");

    const auto& f = fits[*best_idx];
    best.scores[*best_idx].selected = true;
    best.predictors = candidates[*best_idx];
    best.years = years;
    best.response = response;
    best.fitted.assign(f.fitted.data(), f.fitted.data() + f.fitted.size());
    best.column_mean = f.mean;
    best.column_scale = f.scale;
    best.standardized_coefficients = f.gamma;
    double intercept = f.gamma[0];
    best.coefficients.assign(best.predictors.size() + 1, 0.0);
    for (std::size_t j = 0; j < best.predictors.size(); ++j) {
        best.coefficients[j + 1] = f.gamma[j + 1] / f.scale[j];
        intercept -= f.gamma[j + 1] * f.mean[j] / f.scale[j];
    }
    best.coefficients[0] = intercept;
    return best;
}

TrendModel fit_trend(const GroupedPanel& grouped, const WeatherTable& weather, const std::vector<PredictorSet>& candidates) {
    std::vector<int> years;
    std::vector<double> response;
    for (std::size_t t = 0; t < grouped.n_years(); ++t) {
        if (!grouped.observed[t]) continue;
        years.push_back(grouped.years[t]);
        response.push_back(grouped.values.col(static_cast<Eigen::Index>(t)).mean());
    }
    return fit_trend_series(years, response, weather, candidates);
}

NormalizedPanel detrend(const GroupedPanel& grouped, const TrendModel& model, const WeatherTable& weather) {
    NormalizedPanel out;
    out.years = grouped.years;
    out.observed = grouped.observed;
    out.z = grouped.values;
    out.trend.resize(grouped.n_years(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < grouped.n_years(); ++t) {
        const int year = grouped.years[t];
        if (!weather.has(year)) {
            if (grouped.observed[t])
                throw ValidationError("detrend: no weather row for year " + std::to_string(year));
            continue;
        }
        out.trend[t] = model.predict(year, weather);
        if (grouped.observed[t]) out.z.col(static_cast<Eigen::Index>(t)).array() -= out.trend[t];
    }
    return out;
}

Eigen::MatrixXd retrend_log(const NormalizedPanel& normalized) {
    Eigen::MatrixXd out = normalized.z;
    for (std::size_t t = 0; t < normalized.n_years(); ++t)
        if (normalized.observed[t]) out.col(static_cast<Eigen::Index>(t)).array() += normalized.trend[t];
    return out;
}

std::vector<double> retrend(const std::vector<double>& z, const TrendModel& model, int target_year,
                            const WeatherTable& weather) {
    const double level = model.predict(target_year, weather);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::exp(z[i] + level);
    return out;
}

Eigen::MatrixXd retrend_draws(const Eigen::MatrixXd& z_draws, const TrendModel& model, int target_year,
                              const WeatherTable& weather) {
    const double level = model.predict(target_year, weather);
    return (z_draws.array() + level).exp().matrix();
}

}  // namespace yieldcast
