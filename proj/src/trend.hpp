#pragma once

#include "aggregate.hpp"
#include "grid.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace yieldcast {

enum class Predictor { year, rt, pet, sd, sa };

using PredictorSet = std::vector<Predictor>;

std::string to_string(Predictor p);
std::string to_string(const PredictorSet& set);  // "year+rt+pet"; "1" for intercept only
PredictorSet parse_predictor_set(const std::string& text);

/// Every subset of {RT, PET, SD, SA} combined with year.
std::vector<PredictorSet> default_trend_candidates();
/// The default candidates that leave at least one residual degree of freedom with `n_years` observations.
std::vector<PredictorSet> default_trend_candidates(std::size_t n_years);

struct CandidateScore {
    PredictorSet predictors;
    double in_sample_mse = 0.0;
    double loocv_mse = 0.0;
    bool rank_deficient = false;
    bool selected = false;
};

/// Field-level linear trend on annual mean log yield.
struct TrendModel {
    PredictorSet predictors;
    std::vector<double> coefficients;  // intercept first, then one per predictor on the raw scale
    std::vector<int> years;            // years used in the fit
    std::vector<double> response;
    std::vector<double> fitted;
    std::vector<CandidateScore> scores;

    // Internal standardized parameterization used for prediction.
    std::vector<double> column_mean;
    std::vector<double> column_scale;
    std::vector<double> standardized_coefficients;

    double predict(int year, const WeatherTable& weather) const;
    /// Rebuilds a model from raw coefficients (as written by the trend subcommand).
    static TrendModel from_coefficients(PredictorSet predictors, std::vector<double> coefficients);
};

/// OLS on (year, response) pairs; selection by leave-one-out MSE with ties
/// going to the smaller predictor set.
TrendModel fit_trend_series(const std::vector<int>& years, const std::vector<double>& response,
                            const WeatherTable& weather, const std::vector<PredictorSet>& candidates);

/// Response is the per-year mean over groups of the aggregated log yield.
TrendModel fit_trend(const GroupedPanel& grouped, const WeatherTable& weather, const std::vector<PredictorSet>& candidates);

/// Groups x years of normalized yield Z; gap-year columns stay unobserved.
struct NormalizedPanel {
    std::vector<int> years;
    std::vector<std::uint8_t> observed;
    Eigen::MatrixXd z;
    std::vector<double> trend;  // trend value subtracted from each column

    std::size_t n_groups() const { return static_cast<std::size_t>(z.rows()); }
    std::size_t n_years() const { return years.size(); }
};

NormalizedPanel detrend(const GroupedPanel& grouped, const TrendModel& model, const WeatherTable& weather);
/// Inverse of detrend on the log scale.
Eigen::MatrixXd retrend_log(const NormalizedPanel& normalized);

/// exp(Z_i + trend(target_year)) per group.
std::vector<double> retrend(const std::vector<double>& z, const TrendModel& model, int target_year,
                            const WeatherTable& weather);
/// Same, applied to every posterior draw (rows = draws, columns = groups).
Eigen::MatrixXd retrend_draws(const Eigen::MatrixXd& z_draws, const TrendModel& model, int target_year,
                              const WeatherTable& weather);

}  // namespace yieldcast
