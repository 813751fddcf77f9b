#pragma once

// Joint log-density of (time, status, cause, treatment, U) given the
// covariates, the resulting Bernoulli posterior of the latent confounder,
// and posterior sampling. All density arithmetic stays in the log domain.

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "survsens/model.hpp"
#include "survsens/normal.hpp"
#include "survsens/probit.hpp"
#include "survsens/rng.hpp"

namespace survsens {

namespace detail {

inline Eigen::VectorXd probit_design_row(const SurvivalRecord& r, bool intercept) {
    const int p = static_cast<int>(r.covariates.size());
    Eigen::VectorXd row(p + (intercept ? 1 : 0));
    if (intercept) {
        row[0] = 1.0;
        row.tail(p) = r.covariates;
    } else {
        row = r.covariates;
    }
    return row;
}

} // namespace detail

// Log joint density of one record and confounder value u in {0,1}:
// Bernoulli(pi) term, probit treatment term, and per-cause hazard factors
//   {lambda_j0(T) e^eta}^{I(status=1, cause=j)} exp{-Lambda_j0(T) e^eta}.
inline double joint_logdensity(const SurvivalRecord& record, const ModelEstimate& theta,
                               const SensitivityParams& sens, int u) {
    const int m = theta.m();
    double ld = (u == 1) ? std::log(sens.pi) : std::log(1.0 - sens.pi);

    const Eigen::VectorXd xrow = detail::probit_design_row(record, theta.probit_intercept);
    const double eta_z = xrow.dot(theta.beta_z) + sens.zeta_z * u;
    ld += (record.treat == 1) ? norm_logcdf(eta_z) : norm_logcdf(-eta_z);

    for (int j = 0; j < m; ++j) {
        const CauseEstimate& c = theta.causes[j];
        const double eta = c.tau * record.treat + c.beta.dot(record.covariates) +
                           sens.zeta[j] * u;
        if (record.status == 1 && record.cause == j + 1) {
            const double inc = c.baseline.increment_at(record.time);
            if (!(inc > 0.0))
                throw error("joint_logdensity: event at a time with zero baseline increment");
            ld += std::log(inc) + eta;
        }
        ld -= c.baseline.cumulative_at(record.time) * std::exp(eta);
    }
    return ld;
}

// P(U=1 | branch log-densities), computed without leaving the log domain;
// invariant to adding a common constant to both branches.
inline double posterior_from_logdens(double ld1, double ld0) {
    if (ld1 >= ld0) return 1.0 / (1.0 + std::exp(ld0 - ld1));
    const double e = std::exp(ld1 - ld0);
    return e / (1.0 + e);
}

inline PosteriorU posterior_u(const Dataset& data, const ModelEstimate& theta,
                              const SensitivityParams& sens) {
    sens.validate(theta.m());
    PosteriorU post;
    post.probs.resize(data.n());
    for (int i = 0; i < data.n(); ++i) {
        const double ld1 = joint_logdensity(data.records[i], theta, sens, 1);
        const double ld0 = joint_logdensity(data.records[i], theta, sens, 0);
        post.probs[i] = posterior_from_logdens(ld1, ld0);
    }
    return post;
}

inline std::vector<int> sample_u(const PosteriorU& posterior, RandomStream& rng) {
    std::vector<int> u(posterior.probs.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = rng.next() < posterior.probs[i] ? 1 : 0;
    return u;
}

} // namespace survsens
