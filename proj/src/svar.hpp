#pragma once

#include "aggregate.hpp"
#include "grid.hpp"
#include "rng.hpp"
#include "trend.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace yieldcast {

/// How the neighbourhood matrix R is constructed for the spatial prior on rho.
struct EpsilonPolicy {
    enum class Kind { value, automatic, complete, exchangeable, spatial };
    Kind kind = Kind::automatic;
    double value = 0.0;     // threshold for Kind::value
    double multiple = 1.0;  // scale applied to the automatic threshold

    /// Accepts a number, "auto", "<k>xauto", "complete", "exchangeable" or "spatial".
    static EpsilonPolicy parse(const std::string& text);
    std::string label() const;
};

struct SvarConfig {
    EpsilonPolicy epsilon;
    // Inverse-gamma(shape, scale) priors on the innovation variance and the CAR variance.
    double sigma2_shape = 0.01;
    double sigma2_scale = 0.01;
    double tau2_shape = 0.01;
    double tau2_scale = 0.01;
    // lambda ~ Uniform(0, 1); rho marginal is Uniform(-1, 1).

    std::size_t n_iter = 20000;
    std::size_t burn_in = 10000;
    std::size_t thin = 10;
    std::size_t n_chains = 4;
    std::uint64_t seed = 1;
    double eta_step = 1.0;     // initial random-walk scale, in units of the prior conditional sd
    double lambda_step = 0.5;  // initial random-walk scale on logit(lambda)
    bool adapt = true;
    bool use_likelihood = true;

    void validate() const;
    std::size_t retained_per_chain() const { return (n_iter - burn_in) / thin; }
};

/// Leroux CAR precision Q = (1 - lambda) I + lambda R with its Cholesky factor.
class CarPrecision {
public:
    CarPrecision(const Eigen::MatrixXd& r, double lambda);

    const Eigen::MatrixXd& matrix() const { return q_; }
    double lambda() const { return lambda_; }
    double log_det() const { return log_det_; }
    double quadratic(const Eigen::VectorXd& x) const { return x.dot(q_ * x); }
    Eigen::MatrixXd inverse() const;
    Eigen::VectorXd inverse_diagonal() const;

private:
    double lambda_;
    Eigen::MatrixXd q_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_det_ = 0.0;
};

Eigen::MatrixXd to_real(const Eigen::MatrixXi& r);

/// Omega = tau2 * Q^{-1}.
Eigen::MatrixXd car_covariance(double tau2, double lambda, const NeighborMatrix& r);

/// rho_i = 2 Phi(eta_i / sqrt(omega_ii)) - 1, kept strictly inside (-1, 1).
double copula_transform(double eta, double omega_ii);
Eigen::VectorXd copula_transform(const Eigen::VectorXd& eta, const Eigen::VectorXd& omega_diag);
/// Inverse of copula_transform.
double copula_inverse(double rho, double omega_ii);

/// Sum over groups and t = 2..T of log N(Z_t; rho_i Z_{t-1}, sigma2). Z must be complete.
double log_likelihood(const Eigen::MatrixXd& z, const Eigen::VectorXd& rho, double sigma2);

struct ImputationMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Conditional law of an interior value of an AR(1) series given its two neighbours.
ImputationMoments imputation_moments(double before, double after, double rho, double sigma2);

/// Draws column `gap` of a complete working matrix from its conditional given columns gap-1 and gap+1.
Eigen::VectorXd impute_missing(const Eigen::MatrixXd& z, const Eigen::VectorXd& rho, double sigma2, std::size_t gap,
                               Rng& rng);

struct LatentState {
    Eigen::VectorXd eta;
    Eigen::VectorXd rho;
    double sigma2 = 1.0;
    double tau2 = 1.0;
    double lambda = 0.5;
    Eigen::MatrixXd z_missing;  // groups x gap years
};

struct SvarPosterior {
    std::size_t n_groups = 0;
    std::vector<int> gap_years;
    std::vector<int> chain;      // per draw
    std::vector<int> iteration;  // per draw, 0-based sweep index within its chain
    Eigen::MatrixXd rho;         // draws x groups
    Eigen::MatrixXd eta;         // draws x groups
    Eigen::VectorXd sigma2;
    Eigen::VectorXd tau2;
    Eigen::VectorXd lambda;
    Eigen::MatrixXd z_missing;   // draws x (gap * n_groups + group)
    std::map<std::string, double> acceptance;
    std::map<std::string, double> rhat;

    std::size_t n_draws() const { return static_cast<std::size_t>(rho.rows()); }
    Eigen::VectorXd rho_mean() const { return rho.colwise().mean().transpose(); }
};

/// Metropolis-within-Gibbs sampler for the spatially varying AR(1) model.
SvarPosterior mcmc_run(const NormalizedPanel& z, const NeighborMatrix& r, const SvarConfig& config);

/// Runs a single chain from an explicit state; exposed for reproducibility checks.
SvarPosterior mcmc_chain(const NormalizedPanel& z, const NeighborMatrix& r, const SvarConfig& config,
                         std::size_t chain_index);

/// Split-R-hat over chains for one scalar series stored chain-contiguously.
double split_rhat(const std::vector<std::vector<double>>& chains);

struct Forecast {
    Eigen::MatrixXd draws;  // posterior draws x groups
    Eigen::VectorXd mean;
    Eigen::VectorXd median;
    Eigen::VectorXd lower;  // 2.5%
    Eigen::VectorXd upper;  // 97.5%
};

/// One-step-ahead posterior predictive: Z_hat = rho Z_last + eps, eps ~ N(0, sigma2), per draw.
Forecast forecast(const SvarPosterior& posterior, const Eigen::VectorXd& z_last, std::uint64_t seed);
/// Summaries over the rows of an arbitrary draw matrix.
Forecast summarize_draws(Eigen::MatrixXd draws);

/// Linear-interpolation sample quantile (type 7).
double quantile(std::vector<double> values, double p);

/// Paints each group's value onto its cells.
FieldRaster disaggregate(const std::vector<double>& group_values, const GroupAssignment& assignment,
                         const std::string& variable_name = "yield", const std::string& time_label = "forecast");

}  // namespace yieldcast
