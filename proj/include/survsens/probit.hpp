#pragma once

// Probit treatment-assignment model: plain/offset maximum likelihood and
// the posterior-weighted mixture objective used in the M-step when the
// binary confounder enters with a fixed coefficient.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "survsens/coxph.hpp" // NewtonControl, error
#include "survsens/normal.hpp"

namespace survsens {

struct ProbitFit {
    Eigen::VectorXd coef;
    Eigen::MatrixXd cov;
    double loglik = 0.0;
    int iterations = 0;
};

// Design matrix [1, X] (or X alone) for the treatment model.
inline Eigen::MatrixXd make_probit_design(const Dataset& data, bool intercept = true) {
    const int n = data.n(), p = data.p();
    Eigen::MatrixXd design(n, p + (intercept ? 1 : 0));
    for (int i = 0; i < n; ++i) {
        int c = 0;
        if (intercept) design(i, c++) = 1.0;
        design.row(i).tail(p) = data.records[i].covariates.transpose();
        (void)c;
    }
    return design;
}

inline double probit_loglik(const Eigen::VectorXi& z, const Eigen::MatrixXd& design,
                            const Eigen::VectorXd& coef, const Eigen::VectorXd& offset) {
    const int n = static_cast<int>(z.size());
    const Eigen::VectorXd eta = design * coef + offset;
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(eta[i])) throw error("non-finite linear predictor");
        ll += (z[i] == 1) ? norm_logcdf(eta[i]) : norm_logcdf(-eta[i]);
    }
    return ll;
}

namespace detail {

// One mixture component per subject: linear-predictor offset and weight.
// A plain fit is the special case of a single unit-weight component.
struct ProbitTerm {
    double offset;
    double weight;
};

inline void probit_mixture_derivatives(
    const Eigen::VectorXi& z, const Eigen::MatrixXd& design,
    const std::vector<std::vector<ProbitTerm>>& terms, const Eigen::VectorXd& coef,
    double& loglik, Eigen::VectorXd& score, Eigen::MatrixXd& info) {
    const int n = static_cast<int>(z.size());
    const int q = static_cast<int>(design.cols());
    const Eigen::VectorXd base = design * coef;
    loglik = 0.0;
    score = Eigen::VectorXd::Zero(q);
    info = Eigen::MatrixXd::Zero(q, q);
    for (int i = 0; i < n; ++i) {
        double g = 0.0, h = 0.0;
        for (const ProbitTerm& term : terms[i]) {
            const double eta = base[i] + term.offset;
            if (!std::isfinite(eta)) throw error("non-finite linear predictor");
            if (z[i] == 1) {
                loglik += term.weight * norm_logcdf(eta);
                const double r = inv_mills(eta);
                g += term.weight * r;
                h += term.weight * r * (r + eta);
            } else {
                loglik += term.weight * norm_logcdf(-eta);
                const double r = inv_mills(-eta);
                g -= term.weight * r;
                h += term.weight * r * (r - eta);
            }
        }
        score.noalias() += g * design.row(i).transpose();
        info.noalias() += h * design.row(i).transpose() * design.row(i);
    }
}

inline ProbitFit probit_newton(const Eigen::VectorXi& z, const Eigen::MatrixXd& design,
                               const std::vector<std::vector<ProbitTerm>>& terms,
                               const Eigen::VectorXd& init, const NewtonControl& ctrl) {
    const int q = static_cast<int>(design.cols());
    Eigen::VectorXd coef = init.size() == q ? init : Eigen::VectorXd::Zero(q);
    double loglik;
    Eigen::VectorXd score;
    Eigen::MatrixXd info;
    probit_mixture_derivatives(z, design, terms, coef, loglik, score, info);

    int it = 0;
    for (; it < ctrl.max_iter; ++it) {
        if (score.lpNorm<Eigen::Infinity>() < ctrl.tol) break;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
            throw error("probit fit: singular information matrix");
        const Eigen::VectorXd direction = ldlt.solve(score);

        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h < 30; ++h, step *= 0.5) {
            const Eigen::VectorXd cand = coef + step * direction;
            double cand_ll;
            Eigen::VectorXd cand_score;
            Eigen::MatrixXd cand_info;
            probit_mixture_derivatives(z, design, terms, cand, cand_ll, cand_score, cand_info);
            if (cand_ll > loglik) {
                coef = cand;
                loglik = cand_ll;
                score = cand_score;
                info = cand_info;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (score.lpNorm<Eigen::Infinity>() < std::sqrt(ctrl.tol)) break;
            throw error("probit fit: step-halving failed to improve the likelihood");
        }
        if (coef.lpNorm<Eigen::Infinity>() > ctrl.coef_bound)
            throw error("probit fit: separation detected (|coef| > " +
                        std::to_string(ctrl.coef_bound) + ")");
    }
    if (it == ctrl.max_iter && score.lpNorm<Eigen::Infinity>() >= ctrl.tol)
        throw error("probit fit: no convergence after " + std::to_string(ctrl.max_iter) +
                    " iterations");

    ProbitFit fit;
    fit.coef = coef;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
        throw error("probit fit: singular information matrix at the optimum");
    fit.cov = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
    fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();
    fit.loglik = loglik;
    fit.iterations = it;
    return fit;
}

} // namespace detail

inline ProbitFit fit_probit(const Eigen::VectorXi& z, const Eigen::MatrixXd& design,
                            const Eigen::VectorXd& offset = Eigen::VectorXd(),
                            const Eigen::VectorXd& init = Eigen::VectorXd(),
                            const NewtonControl& ctrl = NewtonControl{}) {
    const int n = static_cast<int>(z.size());
    std::vector<std::vector<detail::ProbitTerm>> terms(n);
    for (int i = 0; i < n; ++i)
        terms[i] = {{offset.size() == n ? offset[i] : 0.0, 1.0}};
    return detail::probit_newton(z, design, terms, init, ctrl);
}

// Maximizes the posterior mixture
//   sum_i  pi_i * loglik_i(offset = zeta_z) + (1 - pi_i) * loglik_i(offset = 0),
// the treatment-model update with the confounder integrated against its
// per-subject posterior. With zeta_z = 0 this is a plain probit fit.
inline ProbitFit fit_q2_probit(const Eigen::VectorXi& z, const Eigen::MatrixXd& design,
                               double zeta_z, const Eigen::VectorXd& posterior_probs,
                               const Eigen::VectorXd& init = Eigen::VectorXd(),
                               const NewtonControl& ctrl = NewtonControl{}) {
    const int n = static_cast<int>(z.size());
    if (posterior_probs.size() != n)
        throw error("fit_q2_probit: posterior length mismatch");
    if (!std::isfinite(zeta_z)) throw error("fit_q2_probit: non-finite zeta_z");
    std::vector<std::vector<detail::ProbitTerm>> terms(n);
    for (int i = 0; i < n; ++i) {
        const double p = posterior_probs[i];
        if (!(p >= 0.0 && p <= 1.0))
            throw error("fit_q2_probit: posterior probability outside [0,1]");
        terms[i] = {{zeta_z, p}, {0.0, 1.0 - p}};
    }
    return detail::probit_newton(z, design, terms, init, ctrl);
}

} // namespace survsens
