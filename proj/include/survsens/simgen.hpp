#pragma once

// Synthetic data generators for survival and competing-risks outcomes with
// a latent binary confounder. Baseline hazards are constant, so event times
// come from exact inverse-transform sampling; competing causes are drawn
// from the all-cause exponential with cause probabilities proportional to
// the cause-specific rates. Draws are counter-based with one sub-stream per
// variable, so per-subject draws do not depend on n.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "survsens/dataset.hpp"
#include "survsens/normal.hpp"
#include "survsens/rng.hpp"

namespace survsens {

namespace simstream {
inline constexpr std::uint64_t X = 1;
inline constexpr std::uint64_t U = 2;
inline constexpr std::uint64_t Z = 3;
inline constexpr std::uint64_t V = 4;
inline constexpr std::uint64_t C = 5;
inline constexpr std::uint64_t J = 6;
} // namespace simstream

struct SurvSimConfig {
    int n = 1000;
    Eigen::VectorXd beta_z = (Eigen::VectorXd(2) << 0.25, -0.25).finished();
    double zeta_z = 0.0;
    Eigen::VectorXd beta = (Eigen::VectorXd(2) << 0.5, -1.0).finished();
    double tau = 1.0;
    double zeta = 0.0;
    double pi = 0.5;
    double baseline_rate = 1.0;
    double censor_low = 1.0;
    double censor_high = 2.0;
    Eigen::VectorXd covariate_means = (Eigen::VectorXd(2) << 0.0, 1.0).finished();
    Eigen::VectorXd covariate_sds = (Eigen::VectorXd(2) << 1.0, 1.0).finished();
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 2) throw error("simulate: n must be >= 2");
        if (!(baseline_rate > 0.0)) throw error("simulate: baseline_rate must be > 0");
        if (!(censor_low < censor_high)) throw error("simulate: censor_low < censor_high required");
        if (!(pi > 0.0 && pi < 1.0)) throw error("simulate: pi must lie in (0,1)");
        if (covariate_means.size() != covariate_sds.size() ||
            covariate_means.size() != beta.size() || beta.size() != beta_z.size())
            throw error("simulate: covariate/coefficient dimensions disagree");
    }
};

struct CauseSimParams {
    Eigen::VectorXd beta;
    double tau = 0.0;
    double zeta = 0.0;
    double baseline_rate = 1.0;
};

struct CompRiskSimConfig {
    int n = 1000;
    Eigen::VectorXd beta_z = (Eigen::VectorXd(2) << 0.25, -0.25).finished();
    double zeta_z = 0.0;
    std::vector<CauseSimParams> causes = {
        {(Eigen::VectorXd(2) << 0.5, -1.0).finished(), 1.0, 0.0, 1.0},
        {(Eigen::VectorXd(2) << -0.5, 0.2).finished(), -1.0, 0.0, 1.0}};
    double pi = 0.5;
    double censor_low = 0.3;
    double censor_high = 0.7;
    Eigen::VectorXd covariate_means = (Eigen::VectorXd(2) << 0.0, 1.0).finished();
    Eigen::VectorXd covariate_sds = (Eigen::VectorXd(2) << 1.0, 1.0).finished();
    std::uint64_t seed = 0;

    void validate() const {
        if (n < 2) throw error("simulate: n must be >= 2");
        if (causes.empty()) throw error("simulate: need at least one cause");
        for (const CauseSimParams& c : causes) {
            if (!(c.baseline_rate > 0.0)) throw error("simulate: baseline rates must be > 0");
            if (c.beta.size() != beta_z.size())
                throw error("simulate: covariate/coefficient dimensions disagree");
        }
        if (!(censor_low < censor_high)) throw error("simulate: censor_low < censor_high required");
        if (!(pi > 0.0 && pi < 1.0)) throw error("simulate: pi must lie in (0,1)");
        if (covariate_means.size() != covariate_sds.size() ||
            covariate_means.size() != beta_z.size())
            throw error("simulate: covariate/coefficient dimensions disagree");
    }
};

namespace detail {

inline std::vector<std::string> default_cov_names(int p) {
    std::vector<std::string> names;
    for (int k = 1; k <= p; ++k) names.push_back("x" + std::to_string(k));
    return names;
}

} // namespace detail

inline std::pair<Dataset, std::vector<int>> gen_survival(const SurvSimConfig& cfg) {
    cfg.validate();
    const int p = static_cast<int>(cfg.beta.size());
    std::vector<SurvivalRecord> records;
    std::vector<int> true_u;
    records.reserve(cfg.n);
    true_u.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        SurvivalRecord r;
        r.covariates.resize(p);
        for (int k = 0; k < p; ++k) {
            const double uq = counter_uniform(cfg.seed, simstream::X,
                                              static_cast<std::uint64_t>(i) * p + k);
            r.covariates[k] = cfg.covariate_means[k] + cfg.covariate_sds[k] * norm_quantile(uq);
        }
        const int u = counter_uniform(cfg.seed, simstream::U, i) < cfg.pi ? 1 : 0;
        const double pz = norm_cdf(cfg.beta_z.dot(r.covariates) + cfg.zeta_z * u);
        r.treat = counter_uniform(cfg.seed, simstream::Z, i) < pz ? 1 : 0;

        const double eta = cfg.tau * r.treat + cfg.beta.dot(r.covariates) + cfg.zeta * u;
        const double v = counter_uniform(cfg.seed, simstream::V, i);
        const double t_event = -std::log(v) * std::exp(-eta) / cfg.baseline_rate;
        const double cdraw = counter_uniform(cfg.seed, simstream::C, i);
        const double censor = cfg.censor_low + (cfg.censor_high - cfg.censor_low) * cdraw;

        r.status = t_event <= censor ? 1 : 0;
        r.time = std::min(t_event, censor);
        r.cause = r.status;
        records.push_back(std::move(r));
        true_u.push_back(u);
    }
    return {make_dataset(std::move(records), detail::default_cov_names(p), 1),
            std::move(true_u)};
}

inline std::pair<Dataset, std::vector<int>> gen_competing(const CompRiskSimConfig& cfg) {
    cfg.validate();
    const int p = static_cast<int>(cfg.beta_z.size());
    const int m = static_cast<int>(cfg.causes.size());
    std::vector<SurvivalRecord> records;
    std::vector<int> true_u;
    records.reserve(cfg.n);
    true_u.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        SurvivalRecord r;
        r.covariates.resize(p);
        for (int k = 0; k < p; ++k) {
            const double uq = counter_uniform(cfg.seed, simstream::X,
                                              static_cast<std::uint64_t>(i) * p + k);
            r.covariates[k] = cfg.covariate_means[k] + cfg.covariate_sds[k] * norm_quantile(uq);
        }
        const int u = counter_uniform(cfg.seed, simstream::U, i) < cfg.pi ? 1 : 0;
        const double pz = norm_cdf(cfg.beta_z.dot(r.covariates) + cfg.zeta_z * u);
        r.treat = counter_uniform(cfg.seed, simstream::Z, i) < pz ? 1 : 0;

        double total_rate = 0.0;
        std::vector<double> rates(m);
        for (int j = 0; j < m; ++j) {
            const CauseSimParams& cp = cfg.causes[j];
            rates[j] = cp.baseline_rate *
                       std::exp(cp.tau * r.treat + cp.beta.dot(r.covariates) + cp.zeta * u);
            total_rate += rates[j];
        }
        const double v = counter_uniform(cfg.seed, simstream::V, i);
        const double t_event = -std::log(v) / total_rate;
        // failure type with probability rate_j / total_rate
        const double jdraw = counter_uniform(cfg.seed, simstream::J, i);
        int cause = m;
        double acc = 0.0;
        for (int j = 0; j < m; ++j) {
            acc += rates[j] / total_rate;
            if (jdraw < acc) { cause = j + 1; break; }
        }
        const double cdraw = counter_uniform(cfg.seed, simstream::C, i);
        const double censor = cfg.censor_low + (cfg.censor_high - cfg.censor_low) * cdraw;

        r.status = t_event <= censor ? 1 : 0;
        r.time = std::min(t_event, censor);
        r.cause = r.status == 1 ? cause : 0;
        records.push_back(std::move(r));
        true_u.push_back(u);
    }
    return {make_dataset(std::move(records), detail::default_cov_names(p), m),
            std::move(true_u)};
}

} // namespace survsens
