#include "error.hpp"
#include "svar.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

namespace yieldcast {

namespace {

constexpr std::size_t kAdaptWindow = 50;
constexpr double kTargetLow = 0.20;
constexpr double kTargetHigh = 0.45;

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Draw from InverseGamma(shape, scale).
double draw_inverse_gamma(double shape, double scale, Rng& rng) {
    std::gamma_distribution<double> gamma(shape, 1.0);
    double g = gamma(rng);
    // Shapes far below 1 can underflow; fall back to the smallest positive draw.
    if (!(g > 0.0)) g = std::numeric_limits<double>::min();
    return scale / g;
}

class ChainSampler {
public:
    ChainSampler(const NormalizedPanel& panel, const NeighborMatrix& neighbors, const SvarConfig& config,
                 std::size_t chain_index)
        : cfg_(config),
          r_(to_real(neighbors.r)),
          n_(panel.n_groups()),
          t_(panel.n_years()),
          rng_(make_rng(config.seed, "mcmc-chain", chain_index)),
          chain_index_(chain_index) {
        work_ = panel.z;
        for (std::size_t t = 0; t < t_; ++t)
            if (!panel.observed[t]) gaps_.push_back(t);
        initialize(panel);
    }

    SvarPosterior run(const std::vector<int>& gap_years) {
        const std::size_t keep = cfg_.retained_per_chain();
        SvarPosterior out;
        out.n_groups = n_;
        out.gap_years = gap_years;
        const auto kk = static_cast<Eigen::Index>(keep);
        const auto nn = static_cast<Eigen::Index>(n_);
        out.rho.resize(kk, nn);
        out.eta.resize(kk, nn);
        out.sigma2.resize(kk);
        out.tau2.resize(kk);
        out.lambda.resize(kk);
        out.z_missing.resize(kk, static_cast<Eigen::Index>(n_ * gaps_.size()));

        std::size_t stored = 0;
        for (std::size_t iter = 0; iter < cfg_.n_iter; ++iter) {
            iter_ = iter;
            sweep();
            if (cfg_.adapt && iter < cfg_.burn_in && (iter + 1) % kAdaptWindow == 0) adapt();
            if (iter >= cfg_.burn_in && (iter - cfg_.burn_in + 1) % cfg_.thin == 0 && stored < keep) {
                const auto d = static_cast<Eigen::Index>(stored);
                out.rho.row(d) = rho_.transpose();
                out.eta.row(d) = eta_.transpose();
                out.sigma2(d) = sigma2_;
                out.tau2(d) = tau2_;
                out.lambda(d) = car_->lambda();
                for (std::size_t g = 0; g < gaps_.size(); ++g)
                    for (std::size_t i = 0; i < n_; ++i)
                        out.z_missing(d, static_cast<Eigen::Index>(g * n_ + i)) =
                            work_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(gaps_[g]));
                out.chain.push_back(static_cast<int>(chain_index_));
                out.iteration.push_back(static_cast<int>(iter));
                ++stored;
            }
        }
        const std::size_t post = cfg_.n_iter - cfg_.burn_in;
        out.acceptance["eta"] = eta_accept_total_ / static_cast<double>(post * std::max<std::size_t>(n_, 1));
        out.acceptance["lambda"] = lambda_accept_total_ / static_cast<double>(post);
        out.acceptance["tau2"] = tau2_accept_total_ / static_cast<double>(post);
        return out;
    }

private:
    void initialize(const NormalizedPanel& panel) {
        // Linear interpolation between the nearest observed years seeds every gap.
        for (std::size_t g : gaps_) {
            std::size_t lo = g, hi = g;
            while (lo > 0 && !panel.observed[lo]) --lo;
            while (hi + 1 < t_ && !panel.observed[hi]) ++hi;
            const double w = static_cast<double>(g - lo) / static_cast<double>(hi - lo);
            work_.col(static_cast<Eigen::Index>(g)) =
                (1.0 - w) * panel.z.col(static_cast<Eigen::Index>(lo)) + w * panel.z.col(static_cast<Eigen::Index>(hi));
        }
        recompute_stats();
        if (!sxx_.allFinite() || !sxy_.allFinite())
            throw NumericalError("lag products of the normalized panel overflow");

        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.3, 0.7);
        const double jitter = chain_index_ == 0 ? 0.0 : 0.1;
        rho_.resize(static_cast<Eigen::Index>(n_));
        for (std::size_t i = 0; i < n_; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            double r0 = sxx_(ii) > 0.0 ? sxy_(ii) / sxx_(ii) : 0.0;
            r0 = std::clamp(r0 + jitter * normal(rng_), -0.9, 0.9);
            rho_(ii) = r0;
        }
        const double lambda0 = chain_index_ == 0 ? 0.5 : unif(rng_);
        tau2_ = 1.0;
        set_car(lambda0);
        eta_.resize(static_cast<Eigen::Index>(n_));
        for (std::size_t i = 0; i < n_; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            eta_(ii) = copula_inverse(rho_(ii), omega_diag_(ii));
        }
        rho_ = copula_transform(eta_, omega_diag_);

        const double count = static_cast<double>(n_ * (t_ - 1));
        sigma2_ = total_ssr(rho_) / count;
        if (!(sigma2_ > 1e-8)) sigma2_ = cfg_.sigma2_scale;

        eta_step_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_), cfg_.eta_step);
        lambda_step_ = cfg_.lambda_step;
        eta_window_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));

        if (!std::isfinite(log_posterior())) throw NumericalError("non-finite posterior density at initialization");
    }

    void set_car(double lambda) {
        car_.emplace(r_, lambda);
        omega_diag_ = tau2_ * car_->inverse_diagonal();
    }

    void recompute_stats() {
        const auto nn = static_cast<Eigen::Index>(n_);
        sxx_ = Eigen::VectorXd::Zero(nn);
        sxy_ = Eigen::VectorXd::Zero(nn);
        syy_ = Eigen::VectorXd::Zero(nn);
        for (Eigen::Index i = 0; i < nn; ++i)
            for (Eigen::Index s = 1; s < static_cast<Eigen::Index>(t_); ++s) {
                const double prev = work_(i, s - 1), cur = work_(i, s);
                sxx_(i) += prev * prev;
                sxy_(i) += prev * cur;
                syy_(i) += cur * cur;
            }
    }

    double ssr(std::size_t i, double rho) const {
        const auto ii = static_cast<Eigen::Index>(i);
        return std::max(0.0, syy_(ii) - 2.0 * rho * sxy_(ii) + rho * rho * sxx_(ii));
    }

    double total_ssr(const Eigen::VectorXd& rho) const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += ssr(i, rho(static_cast<Eigen::Index>(i)));
        return s;
    }

    // Log-likelihood up to the sigma2 normalizing term, which is constant in rho.
    double rho_loglik(const Eigen::VectorXd& rho) const {
        if (!cfg_.use_likelihood) return 0.0;
        return -total_ssr(rho) / (2.0 * sigma2_);
    }

    double log_posterior() const {
        const double n = static_cast<double>(n_);
        double lp = 0.5 * car_->log_det() - 0.5 * n * std::log(tau2_) - car_->quadratic(eta_) / (2.0 * tau2_);
        lp += -(cfg_.tau2_shape + 1.0) * std::log(tau2_) - cfg_.tau2_scale / tau2_;
        if (cfg_.use_likelihood) {
            const double count = static_cast<double>(n_ * (t_ - 1));
            lp += -0.5 * count * std::log(2.0 * std::numbers::pi * sigma2_) + rho_loglik(rho_);
            lp += -(cfg_.sigma2_shape + 1.0) * std::log(sigma2_) - cfg_.sigma2_scale / sigma2_;
        }
        return lp;
    }

    void sweep() {
        if (cfg_.use_likelihood) update_sigma2();
        update_eta();
        update_lambda();
        update_tau2();
        if (cfg_.use_likelihood && !gaps_.empty()) update_missing();
    }

    void update_sigma2() {
        const double count = static_cast<double>(n_ * (t_ - 1));
        sigma2_ = draw_inverse_gamma(cfg_.sigma2_shape + 0.5 * count, cfg_.sigma2_scale + 0.5 * total_ssr(rho_), rng_);
    }

    void update_eta() {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const auto& q = car_->matrix();
        const double tau = std::sqrt(tau2_);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double qii = q(ii, ii);
            const double old_eta = eta_(ii);
            const double proposal = old_eta + eta_step_(ii) * tau / std::sqrt(qii) * normal(rng_);
            const double cross = q.row(ii).dot(eta_) - qii * old_eta;
            const double delta_quad = qii * (proposal * proposal - old_eta * old_eta) + 2.0 * (proposal - old_eta) * cross;
            double log_ratio = -delta_quad / (2.0 * tau2_);
            const double new_rho = copula_transform(proposal, omega_diag_(ii));
            if (cfg_.use_likelihood) log_ratio += -(ssr(i, new_rho) - ssr(i, rho_(ii))) / (2.0 * sigma2_);
            if (std::log(unif(rng_)) < log_ratio) {
                eta_(ii) = proposal;
                rho_(ii) = new_rho;
                eta_window_(ii) += 1.0;
                if (in_sampling_phase()) eta_accept_total_ += 1.0;
            }
        }
    }

    void update_lambda() {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double lambda = car_->lambda();
        const double proposal = inv_logit(logit(lambda) + lambda_step_ * normal(rng_));
        if (!(proposal > 0.0 && proposal < 1.0)) return;
        std::optional<CarPrecision> candidate;
        try {
            candidate.emplace(r_, proposal);
        } catch (const NumericalError&) {
            return;
        }
        const Eigen::VectorXd new_omega = tau2_ * candidate->inverse_diagonal();
        const Eigen::VectorXd new_rho = copula_transform(eta_, new_omega);
        auto target = [&](const CarPrecision& c, const Eigen::VectorXd& rho) {
            return 0.5 * c.log_det() - c.quadratic(eta_) / (2.0 * tau2_) + rho_loglik(rho) +
                   std::log(c.lambda()) + std::log1p(-c.lambda());
        };
        const double log_ratio = target(*candidate, new_rho) - target(*car_, rho_);
        if (std::log(unif(rng_)) < log_ratio) {
            car_ = std::move(candidate);
            omega_diag_ = new_omega;
            rho_ = new_rho;
            lambda_window_ += 1.0;
            if (in_sampling_phase()) lambda_accept_total_ += 1.0;
        }
    }

    // Conjugate draw from the eta prior, corrected by the likelihood through rho.
    void update_tau2() {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double shape = cfg_.tau2_shape + 0.5 * static_cast<double>(n_);
        const double scale = cfg_.tau2_scale + 0.5 * car_->quadratic(eta_);
        const double proposal = draw_inverse_gamma(shape, scale, rng_);
        if (!std::isfinite(proposal)) return;
        const Eigen::VectorXd new_omega = omega_diag_ * (proposal / tau2_);
        const Eigen::VectorXd new_rho = copula_transform(eta_, new_omega);
        const double log_ratio = rho_loglik(new_rho) - rho_loglik(rho_);
        if (std::log(unif(rng_)) < log_ratio) {
            tau2_ = proposal;
            omega_diag_ = new_omega;
            rho_ = new_rho;
            if (in_sampling_phase()) tau2_accept_total_ += 1.0;
        }
    }

    void update_missing() {
        for (std::size_t g : gaps_) work_.col(static_cast<Eigen::Index>(g)) = impute_missing(work_, rho_, sigma2_, g, rng_);
        recompute_stats();
    }

    void adapt() {
        const double window = static_cast<double>(kAdaptWindow);
        for (Eigen::Index i = 0; i < eta_step_.size(); ++i) {
            const double rate = eta_window_(i) / window;
            if (rate < kTargetLow) eta_step_(i) *= 0.75;
            else if (rate > kTargetHigh) eta_step_(i) *= 1.3;
        }
        const double lrate = lambda_window_ / window;
        if (lrate < kTargetLow) lambda_step_ *= 0.75;
        else if (lrate > kTargetHigh) lambda_step_ *= 1.3;
        eta_window_.setZero();
        lambda_window_ = 0.0;
    }

    bool in_sampling_phase() const { return iter_ >= cfg_.burn_in; }

    const SvarConfig& cfg_;
    Eigen::MatrixXd r_;
    std::size_t n_, t_;
    Rng rng_;
    std::size_t chain_index_;
    Eigen::MatrixXd work_;
    std::vector<std::size_t> gaps_;

    Eigen::VectorXd eta_, rho_;
    double sigma2_ = 1.0;
    double tau2_ = 1.0;
    std::optional<CarPrecision> car_;
    Eigen::VectorXd omega_diag_;
    Eigen::VectorXd sxx_, sxy_, syy_;

    Eigen::VectorXd eta_step_;
    double lambda_step_ = 0.5;
    Eigen::VectorXd eta_window_;
    double lambda_window_ = 0.0;
    double eta_accept_total_ = 0.0;
    double lambda_accept_total_ = 0.0;
    double tau2_accept_total_ = 0.0;
    std::size_t iter_ = 0;
};

void validate_inputs(const NormalizedPanel& z, const NeighborMatrix& r) {
    if (z.n_groups() == 0) throw ValidationError("normalized panel has no groups");
    if (r.size() != z.n_groups())
        throw ValidationError("neighbour matrix is " + std::to_string(r.size()) + "x" + std::to_string(r.size()) +
                              " but the panel has " + std::to_string(z.n_groups()) + " groups");
    std::size_t observed = 0;
    for (std::size_t t = 0; t < z.n_years(); ++t) {
        if (!z.observed[t]) continue;
        ++observed;
        if (!z.z.col(static_cast<Eigen::Index>(t)).allFinite())
            throw ValidationError("normalized panel has non-finite values in year " + std::to_string(z.years[t]));
    }
    if (observed < 3) throw ValidationError("SVAR fitting needs at least 3 observed years");
    if (!z.observed.front() || !z.observed.back())
        throw ValidationError("gap year at the series boundary cannot be imputed");
}

std::vector<int> gap_years_of(const NormalizedPanel& z) {
    std::vector<int> out;
    for (std::size_t t = 0; t < z.n_years(); ++t)
        if (!z.observed[t]) out.push_back(z.years[t]);
    return out;
}

}  // namespace

SvarPosterior mcmc_chain(const NormalizedPanel& z, const NeighborMatrix& r, const SvarConfig& config,
                         std::size_t chain_index) {
    config.validate();
    validate_inputs(z, r);
    ChainSampler sampler(z, r, config, chain_index);
    return sampler.run(gap_years_of(z));
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        if (half < 2) return std::numeric_limits<double>::quiet_NaN();
        halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    const double m = static_cast<double>(halves.size());
    const double n = static_cast<double>(halves.front().size());
    std::vector<double> means, vars;
    for (const auto& h : halves) {
        double mean = 0.0;
        for (double v : h) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : h) var += (v - mean) * (v - mean);
        means.push_back(mean);
        vars.push_back(var / (n - 1.0));
    }
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= m;
    double b = 0.0;
    for (double v : means) b += (v - grand) * (v - grand);
    b *= n / (m - 1.0);
    double w = 0.0;
    for (double v : vars) w += v;
    w /= m;
    if (!(w > 0.0)) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    const double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

SvarPosterior mcmc_run(const NormalizedPanel& z, const NeighborMatrix& r, const SvarConfig& config) {
    config.validate();
    validate_inputs(z, r);
    std::vector<std::future<SvarPosterior>> jobs;
    for (std::size_t c = 0; c < config.n_chains; ++c)
        jobs.push_back(std::async(std::launch::async, [&, c] { return mcmc_chain(z, r, config, c); }));
    std::vector<SvarPosterior> chains;
    for (auto& j : jobs) chains.push_back(j.get());

    SvarPosterior out;
    out.n_groups = z.n_groups();
    out.gap_years = chains.front().gap_years;
    const std::size_t per = config.retained_per_chain();
    const auto total = static_cast<Eigen::Index>(per * chains.size());
    const auto n = static_cast<Eigen::Index>(out.n_groups);
    out.rho.resize(total, n);
    out.eta.resize(total, n);
    out.sigma2.resize(total);
    out.tau2.resize(total);
    out.lambda.resize(total);
    out.z_missing.resize(total, chains.front().z_missing.cols());
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const auto off = static_cast<Eigen::Index>(c * per);
        const auto len = static_cast<Eigen::Index>(per);
        out.rho.middleRows(off, len) = chains[c].rho;
        out.eta.middleRows(off, len) = chains[c].eta;
        out.sigma2.segment(off, len) = chains[c].sigma2;
        out.tau2.segment(off, len) = chains[c].tau2;
        out.lambda.segment(off, len) = chains[c].lambda;
        out.z_missing.middleRows(off, len) = chains[c].z_missing;
        out.chain.insert(out.chain.end(), chains[c].chain.begin(), chains[c].chain.end());
        out.iteration.insert(out.iteration.end(), chains[c].iteration.begin(), chains[c].iteration.end());
        for (const auto& [k, v] : chains[c].acceptance) out.acceptance[k] += v / static_cast<double>(chains.size());
    }

    auto per_chain = [&](auto&& column) {
        std::vector<std::vector<double>> series(chains.size());
        for (std::size_t c = 0; c < chains.size(); ++c)
            for (std::size_t d = 0; d < per; ++d) series[c].push_back(column(c * per + d));
        return split_rhat(series);
    };
    for (Eigen::Index i = 0; i < n; ++i)
        out.rhat["rho[" + std::to_string(i) + "]"] =
            per_chain([&](std::size_t d) { return out.rho(static_cast<Eigen::Index>(d), i); });
    out.rhat["sigma2"] = per_chain([&](std::size_t d) { return out.sigma2(static_cast<Eigen::Index>(d)); });
    out.rhat["tau2"] = per_chain([&](std::size_t d) { return std::log(out.tau2(static_cast<Eigen::Index>(d))); });
    out.rhat["lambda"] = per_chain([&](std::size_t d) { return out.lambda(static_cast<Eigen::Index>(d)); });
    return out;
}

}  // namespace yieldcast
