#pragma once

// Stochastic EM: each iteration draws a single confounder vector from its
// posterior and refits the outcome and treatment models treating the draw
// as observed. After a burn-in the chain is treated as stationary and the
// next K iterates are averaged; the combined standard error adds the
// between-draw spread to the mean within-draw variance:
//   se = sqrt( (1/K) sum_k sigma_k^2 + (1/(K-1)) sum_k (tau_k - taubar)^2 ).

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "survsens/em.hpp"

namespace survsens {

struct StoEmControl {
    int burn_in = 20;
    int K = 40;
    std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kStoEmStream = 0x53544F454DULL;

struct CombinedEstimate {
    Eigen::VectorXd tau_hat;
    Eigen::VectorXd se;
    // per cause: the K (tau_k, sigma_k) pairs that were combined
    std::vector<std::vector<std::pair<double, double>>> per_draw;
};

// M-step with the drawn confounder treated as observed: per-cause Cox fits
// with offsets zeta_j * u and a probit fit with offset zeta_z * u. The
// model-based SEs of the treatment effects are recorded in se_tau.
inline ModelEstimate sto_em_update(const Dataset& data, const SensitivityParams& sens,
                                   const std::vector<int>& u, const ModelEstimate& prev,
                                   const NewtonControl& ctrl = NewtonControl{}) {
    const int p = data.p();
    ModelEstimate theta;
    theta.probit_intercept = prev.probit_intercept;
    theta.se_tau.resize(data.n_causes);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.n());
    for (int j = 1; j <= data.n_causes; ++j) {
        Eigen::VectorXd offsets(data.n());
        for (int i = 0; i < data.n(); ++i) offsets[i] = sens.zeta[j - 1] * u[i];
        const CoxData slice = cox_slice(data, j);
        Eigen::VectorXd init(p + 1);
        init.head(p) = prev.causes[j - 1].beta;
        init[p] = prev.causes[j - 1].tau;
        const CoxFit fit = fit_cox(slice, offsets, ones, init, ctrl);
        CauseEstimate ce;
        ce.beta = fit.coef.head(p);
        ce.tau = fit.coef[p];
        ce.baseline = fit.baseline;
        theta.causes.push_back(std::move(ce));
        theta.se_tau[j - 1] = std::sqrt(fit.cov(p, p));
    }
    Eigen::VectorXd offset_z(data.n());
    for (int i = 0; i < data.n(); ++i) offset_z[i] = sens.zeta_z * u[i];
    const Eigen::MatrixXd design = make_probit_design(data, prev.probit_intercept);
    theta.beta_z = fit_probit(data.treat_vector(), design, offset_z, prev.beta_z, ctrl).coef;
    return theta;
}

inline ModelEstimate sto_em_iterate(const Dataset& data, const ModelEstimate& theta,
                                    const SensitivityParams& sens, RandomStream& rng) {
    const PosteriorU post = posterior_u(data, theta, sens);
    const std::vector<int> u = sample_u(post, rng);
    return sto_em_update(data, sens, u, theta);
}

// Combines per-cause (tau_k, sigma_k) sequences.
inline CombinedEstimate combine_draws(
    const std::vector<std::vector<std::pair<double, double>>>& per_draw) {
    const int m = static_cast<int>(per_draw.size());
    CombinedEstimate out;
    out.tau_hat.resize(m);
    out.se.resize(m);
    out.per_draw = per_draw;
    for (int j = 0; j < m; ++j) {
        const auto& draws = per_draw[j];
        const int K = static_cast<int>(draws.size());
        if (K < 2) throw error("combine_draws: need K >= 2 repetitions");
        double mean = 0.0;
        for (const auto& d : draws) mean += d.first;
        mean /= K;
        double within = 0.0, between = 0.0;
        for (const auto& d : draws) {
            within += d.second * d.second;
            between += (d.first - mean) * (d.first - mean);
        }
        out.tau_hat[j] = mean;
        out.se[j] = std::sqrt(within / K + between / (K - 1));
    }
    return out;
}

inline CombinedEstimate run_stochastic_em(const Dataset& data, const SensitivityParams& sens,
                                          const StoEmControl& ctrl = StoEmControl{},
                                          bool probit_intercept = true) {
    sens.validate(data.n_causes);
    if (ctrl.burn_in < 1) throw error("run_stochastic_em: burn_in must be >= 1");
    if (ctrl.K < 2) throw error("run_stochastic_em: K must be >= 2");
    ModelEstimate theta = no_u_fit(data, probit_intercept);
    RandomStream stream(ctrl.seed, kStoEmStream);
    for (int b = 0; b < ctrl.burn_in; ++b) theta = sto_em_iterate(data, theta, sens, stream);

    std::vector<std::vector<std::pair<double, double>>> per_draw(data.n_causes);
    for (int k = 0; k < ctrl.K; ++k) {
        theta = sto_em_iterate(data, theta, sens, stream);
        for (int j = 0; j < data.n_causes; ++j)
            per_draw[j].emplace_back(theta.causes[j].tau, theta.se_tau[j]);
    }
    return combine_draws(per_draw);
}

} // namespace survsens
