#include "svar.hpp"

#include "csv.hpp"
#include "error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace yieldcast {

EpsilonPolicy EpsilonPolicy::parse(const std::string& text) {
    EpsilonPolicy p;
    const std::string t(csv::trim(text));
    if (t == "auto") {
        p.kind = Kind::automatic;
    } else if (t.size() > 5 && t.substr(t.size() - 5) == "xauto") {
        p.kind = Kind::automatic;
        p.multiple = csv::parse_double(t.substr(0, t.size() - 5), "epsilon multiple");
        if (!(p.multiple > 0.0)) throw ValidationError("epsilon multiple must be positive");
    } else if (t == "complete") {
        p.kind = Kind::complete;
    } else if (t == "exchangeable") {
        p.kind = Kind::exchangeable;
    } else if (t == "spatial") {
        p.kind = Kind::spatial;
    } else {
        p.kind = Kind::value;
        p.value = csv::parse_double(t, "epsilon");
        if (!(p.value > 0.0)) throw ValidationError("epsilon must be positive");
    }
    return p;
}

std::string EpsilonPolicy::label() const {
    switch (kind) {
        case Kind::automatic: return multiple == 1.0 ? "auto" : csv::format(multiple) + "xauto";
        case Kind::complete: return "complete";
        case Kind::exchangeable: return "exchangeable";
        case Kind::spatial: return "spatial";
        case Kind::value: break;
    }
    return csv::format(value);
}

void SvarConfig::validate() const {
    if (!(n_iter > burn_in)) throw ValidationError("n_iter must exceed burn_in");
    if (thin == 0) throw ValidationError("thin must be positive");
    if (n_chains == 0) throw ValidationError("n_chains must be positive");
    if (retained_per_chain() == 0) throw ValidationError("no draws retained: (n_iter - burn_in) < thin");
    if (!(eta_step > 0.0) || !(lambda_step > 0.0)) throw ValidationError("proposal step sizes must be positive");
    if (!(sigma2_shape > 0.0 && sigma2_scale > 0.0 && tau2_shape > 0.0 && tau2_scale > 0.0))
        throw ValidationError("inverse-gamma hyperparameters must be positive");
}

Eigen::MatrixXd to_real(const Eigen::MatrixXi& r) { return r.cast<double>(); }

CarPrecision::CarPrecision(const Eigen::MatrixXd& r, double lambda) : lambda_(lambda) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw ValidationError("lambda must lie in [0, 1)");
    const auto n = r.rows();
    q_ = (1.0 - lambda) * Eigen::MatrixXd::Identity(n, n) + lambda * r;
    llt_.compute(q_);
    if (llt_.info() != Eigen::Success) throw NumericalError("CAR precision is not positive definite");
    const auto& l = llt_.matrixLLT();
    double ld = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = l(i, i);
        if (!(d > 1e-12)) throw NumericalError("CAR precision is numerically singular");
        ld += std::log(d);
    }
    log_det_ = 2.0 * ld;
}

Eigen::MatrixXd CarPrecision::inverse() const {
    return llt_.solve(Eigen::MatrixXd::Identity(q_.rows(), q_.cols()));
}

Eigen::VectorXd CarPrecision::inverse_diagonal() const {
    // diag(Q^{-1}) = column norms of L^{-1}.
    const auto n = q_.rows();
    Eigen::MatrixXd linv = llt_.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
    return linv.colwise().squaredNorm().transpose();
}

Eigen::MatrixXd car_covariance(double tau2, double lambda, const NeighborMatrix& r) {
    if (!(tau2 > 0.0)) throw ValidationError("tau2 must be positive");
    CarPrecision q(to_real(r.r), lambda);
    return tau2 * q.inverse();
}

double copula_transform(double eta, double omega_ii) {
    const double rho = std::erf(eta / std::sqrt(2.0 * omega_ii));
    constexpr double edge = 1.0 - std::numeric_limits<double>::epsilon();
    return std::clamp(rho, -edge, edge);
}

Eigen::VectorXd copula_transform(const Eigen::VectorXd& eta, const Eigen::VectorXd& omega_diag) {
    Eigen::VectorXd rho(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) rho(i) = copula_transform(eta(i), omega_diag(i));
    return rho;
}

double copula_inverse(double rho, double omega_ii) {
    if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("rho must lie in (-1, 1)");
    return std::sqrt(2.0 * omega_ii) * boost::math::erf_inv(rho);
}

double log_likelihood(const Eigen::MatrixXd& z, const Eigen::VectorXd& rho, double sigma2) {
    if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
    if (z.rows() != rho.size()) throw ValidationError("rho length does not match group count");
    const auto t = z.cols();
    double ssr = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Eigen::Index s = 1; s < t; ++s) {
            const double e = z(i, s) - rho(i) * z(i, s - 1);
            ssr += e * e;
        }
    const double count = static_cast<double>(z.rows() * (t - 1));
    return -0.5 * count * std::log(2.0 * std::numbers::pi * sigma2) - ssr / (2.0 * sigma2);
}

ImputationMoments imputation_moments(double before, double after, double rho, double sigma2) {
    const double denom = 1.0 + rho * rho;
    return {rho * (before + after) / denom, sigma2 / denom};
}

Eigen::VectorXd impute_missing(const Eigen::MatrixXd& z, const Eigen::VectorXd& rho, double sigma2, std::size_t gap,
                               Rng& rng) {
    const auto m = static_cast<Eigen::Index>(gap);
    if (m <= 0 || m + 1 >= z.cols())
        throw ValidationError("gap year at the series boundary cannot be imputed");
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd out(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const auto mom = imputation_moments(z(i, m - 1), z(i, m + 1), rho(i), sigma2);
        out(i) = mom.mean + std::sqrt(mom.variance) * normal(rng);
    }
    return out;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Forecast summarize_draws(Eigen::MatrixXd draws) {
    Forecast f;
    const auto n = draws.cols();
    f.mean.resize(n);
    f.median.resize(n);
    f.lower.resize(n);
    f.upper.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> col(static_cast<std::size_t>(draws.rows()));
        for (Eigen::Index d = 0; d < draws.rows(); ++d) col[static_cast<std::size_t>(d)] = draws(d, i);
        f.mean(i) = draws.col(i).mean();
        f.median(i) = quantile(col, 0.5);
        f.lower(i) = quantile(col, 0.025);
        f.upper(i) = quantile(col, 0.975);
    }
    f.draws = std::move(draws);
    return f;
}

Forecast forecast(const SvarPosterior& posterior, const Eigen::VectorXd& z_last, std::uint64_t seed) {
    if (posterior.n_draws() == 0) throw ValidationError("cannot forecast from an empty posterior");
    if (z_last.size() != static_cast<Eigen::Index>(posterior.n_groups))
        throw ValidationError("last-year Z has " + std::to_string(z_last.size()) + " groups, posterior has " +
                              std::to_string(posterior.n_groups));
    Rng rng = make_rng(seed, "forecast");
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto draws = static_cast<Eigen::Index>(posterior.n_draws());
    Eigen::MatrixXd out(draws, z_last.size());
    for (Eigen::Index d = 0; d < draws; ++d) {
        const double sd = std::sqrt(posterior.sigma2(d));
        for (Eigen::Index i = 0; i < z_last.size(); ++i)
            out(d, i) = posterior.rho(d, i) * z_last(i) + sd * normal(rng);
    }
    return summarize_draws(std::move(out));
}

FieldRaster disaggregate(const std::vector<double>& group_values, const GroupAssignment& assignment,
                         const std::string& variable_name, const std::string& time_label) {
    if (group_values.size() != assignment.n_groups)
        throw ValidationError("disaggregate: " + std::to_string(group_values.size()) + " values for " +
                              std::to_string(assignment.n_groups) + " groups");
    const auto& g = assignment.geometry;
    std::vector<double> values(g.n_cells(), 0.0);
    std::vector<std::uint8_t> present(g.n_cells(), 0);
    for (std::size_t i = 0; i < g.n_cells(); ++i) {
        const int l = assignment.labels[i];
        if (l < 0) continue;
        if (static_cast<std::size_t>(l) >= group_values.size())
            throw ValidationError("disaggregate: label " + std::to_string(l) + " out of range");
        values[i] = group_values[static_cast<std::size_t>(l)];
        present[i] = 1;
    }
    return FieldRaster(variable_name, time_label, g, std::move(values), std::move(present));
}

}  // namespace yieldcast
