#pragma once

// EM algorithm for the latent-confounder survival / competing-risks model,
// the observed-data log-likelihood, and the observed information via
// Louis' formula
//   I(theta) = E[-l''(theta) | obs] - E[s(theta) s(theta)' | obs],
// with the first term in closed form and the second term by Monte Carlo
// over posterior draws of the confounder vector.
//
// Parameter layout used for packing, scores, Hessians and the information
// matrix: per cause j the block [beta_j | tau_j | lambda_j0(t_1..t_dj)],
// blocks in cause order, followed by the treatment-model block beta_z.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "survsens/coxph.hpp"
#include "survsens/latent_confounder.hpp"
#include "survsens/model.hpp"
#include "survsens/probit.hpp"
#include "survsens/rng.hpp"

namespace survsens {

struct EmControl {
    int max_iter = 20;
    double rel_tol = 1e-6;  // 0 disables early stopping
    int louis_draws = 1000;
    std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kLouisStream = 0x4C4F554953ULL;

struct LouisLayout {
    int p = 0, m = 0, q = 0;
    std::vector<int> d;           // baseline increments per cause
    std::vector<int> cause_start; // offset of each cause block
    int probit_start = 0;
    int dim = 0;

    int beta_start(int j) const { return cause_start[j]; }
    int tau_index(int j) const { return cause_start[j] + p; }
    int lambda_start(int j) const { return cause_start[j] + p + 1; }
};

inline LouisLayout louis_layout(const Dataset& data, const ModelEstimate& theta) {
    LouisLayout lay;
    lay.p = data.p();
    lay.m = theta.m();
    lay.q = static_cast<int>(theta.beta_z.size());
    int off = 0;
    for (int j = 0; j < lay.m; ++j) {
        lay.cause_start.push_back(off);
        lay.d.push_back(theta.causes[j].baseline.size());
        off += lay.p + 1 + lay.d.back();
    }
    lay.probit_start = off;
    lay.dim = off + lay.q;
    return lay;
}

inline Eigen::VectorXd louis_pack(const ModelEstimate& theta, const LouisLayout& lay) {
    Eigen::VectorXd v(lay.dim);
    for (int j = 0; j < lay.m; ++j) {
        v.segment(lay.beta_start(j), lay.p) = theta.causes[j].beta;
        v[lay.tau_index(j)] = theta.causes[j].tau;
        v.segment(lay.lambda_start(j), lay.d[j]) = theta.causes[j].baseline.increments;
    }
    v.segment(lay.probit_start, lay.q) = theta.beta_z;
    return v;
}

inline ModelEstimate louis_unpack(const Eigen::VectorXd& v, const ModelEstimate& exemplar,
                                  const LouisLayout& lay) {
    ModelEstimate theta = exemplar;
    for (int j = 0; j < lay.m; ++j) {
        theta.causes[j].beta = v.segment(lay.beta_start(j), lay.p);
        theta.causes[j].tau = v[lay.tau_index(j)];
        theta.causes[j].baseline = make_baseline(
            exemplar.causes[j].baseline.event_times,
            v.segment(lay.lambda_start(j), lay.d[j]));
    }
    theta.beta_z = v.segment(lay.probit_start, lay.q);
    return theta;
}

// Complete-data log-likelihood at theta for a realized confounder vector.
inline double complete_loglik(const Dataset& data, const ModelEstimate& theta,
                              const SensitivityParams& sens, const std::vector<int>& u) {
    const int n = data.n(), m = theta.m();
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        const SurvivalRecord& r = data.records[i];
        for (int j = 0; j < m; ++j) {
            const CauseEstimate& c = theta.causes[j];
            const double eta = c.tau * r.treat + c.beta.dot(r.covariates) +
                               sens.zeta[j] * u[i];
            if (r.status == 1 && r.cause == j + 1) {
                const double inc = c.baseline.increment_at(r.time);
                if (!(inc > 0.0))
                    throw error("complete_loglik: event at a time with zero baseline increment");
                ll += std::log(inc) + eta;
            }
            ll -= c.baseline.cumulative_at(r.time) * std::exp(eta);
        }
        const Eigen::VectorXd xrow = detail::probit_design_row(r, theta.probit_intercept);
        const double eta_z = xrow.dot(theta.beta_z) + sens.zeta_z * u[i];
        ll += (r.treat == 1) ? norm_logcdf(eta_z) : norm_logcdf(-eta_z);
        ll += (u[i] == 1) ? std::log(sens.pi) : std::log(1.0 - sens.pi);
    }
    return ll;
}

namespace detail {

// Quantities that depend on (data, theta) but not on the confounder draw;
// shared by score/Hessian assembly and reused across Monte-Carlo draws.
struct EmCache {
    int n = 0, m = 0, p = 0, q = 0;
    Eigen::MatrixXd X;       // covariates
    Eigen::VectorXd zd;      // treatment as double
    Eigen::MatrixXd design;  // probit design
    Eigen::VectorXd base_z;  // design * beta_z
    std::vector<int> order_asc;

    // per cause
    std::vector<Eigen::VectorXd> delta;      // event indicator
    std::vector<Eigen::VectorXd> exp_base;   // exp(tau z + beta'x)
    std::vector<Eigen::VectorXd> cumhaz;     // Lambda_j0(t_i)
    std::vector<Eigen::VectorXd> lam_inc;    // baseline increments
    std::vector<Eigen::VectorXd> lam_dcount; // deaths per distinct time
    std::vector<std::vector<int>> lam_pos;   // first ascending position in risk set
};

inline EmCache build_em_cache(const Dataset& data, const ModelEstimate& theta) {
    EmCache c;
    c.n = data.n();
    c.m = theta.m();
    c.p = data.p();
    c.X = data.covariate_matrix();
    c.zd.resize(c.n);
    for (int i = 0; i < c.n; ++i) c.zd[i] = data.records[i].treat;
    c.design = make_probit_design(data, theta.probit_intercept);
    c.q = static_cast<int>(c.design.cols());
    c.base_z = c.design * theta.beta_z;

    Eigen::VectorXd time = data.time_vector();
    c.order_asc = time_order(time);

    for (int j = 0; j < c.m; ++j) {
        const CauseEstimate& ce = theta.causes[j];
        Eigen::VectorXd delta(c.n), expb(c.n), ch(c.n);
        for (int i = 0; i < c.n; ++i) {
            const SurvivalRecord& r = data.records[i];
            delta[i] = (r.status == 1 && r.cause == j + 1) ? 1.0 : 0.0;
            expb[i] = std::exp(ce.tau * r.treat + ce.beta.dot(r.covariates));
            ch[i] = ce.baseline.cumulative_at(r.time);
        }
        c.delta.push_back(std::move(delta));
        c.exp_base.push_back(std::move(expb));
        c.cumhaz.push_back(std::move(ch));
        c.lam_inc.push_back(ce.baseline.increments);

        const int dj = ce.baseline.size();
        Eigen::VectorXd dcount = Eigen::VectorXd::Zero(dj);
        std::vector<int> pos(dj);
        for (int kidx = 0; kidx < dj; ++kidx) {
            const double t = ce.baseline.event_times[kidx];
            for (int i = 0; i < c.n; ++i) {
                const SurvivalRecord& r = data.records[i];
                if (r.time == t && r.status == 1 && r.cause == j + 1) dcount[kidx] += 1.0;
            }
            int lo = 0, hi = c.n;
            while (lo < hi) {
                const int mid = (lo + hi) / 2;
                if (time[c.order_asc[mid]] < t) lo = mid + 1; else hi = mid;
            }
            pos[kidx] = lo;
        }
        c.lam_dcount.push_back(std::move(dcount));
        c.lam_pos.push_back(std::move(pos));
    }
    return c;
}

// Score of the complete-data log-likelihood given per-subject multipliers
// efac[j][i] standing in for exp(zeta_j u_i) (realized or posterior-expected)
// and per-subject probit score values gz[i].
inline Eigen::VectorXd assemble_score(const EmCache& c, const LouisLayout& lay,
                                      const std::vector<Eigen::VectorXd>& efac,
                                      const Eigen::VectorXd& gz) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(lay.dim);
    Eigen::VectorXd e(c.n), suffix(c.n + 1);
    for (int j = 0; j < c.m; ++j) {
        e = c.exp_base[j].cwiseProduct(efac[j]);
        const Eigen::VectorXd resid = c.delta[j] - c.cumhaz[j].cwiseProduct(e);
        s.segment(lay.beta_start(j), c.p).noalias() = c.X.transpose() * resid;
        s[lay.tau_index(j)] = c.zd.dot(resid);
        // suffix risk sums over the ascending time order
        suffix[c.n] = 0.0;
        for (int posn = c.n - 1; posn >= 0; --posn)
            suffix[posn] = suffix[posn + 1] + e[c.order_asc[posn]];
        for (int kidx = 0; kidx < lay.d[j]; ++kidx) {
            s[lay.lambda_start(j) + kidx] =
                c.lam_dcount[j][kidx] / c.lam_inc[j][kidx] - suffix[c.lam_pos[j][kidx]];
        }
    }
    s.segment(lay.probit_start, c.q).noalias() = c.design.transpose() * gz;
    return s;
}

inline Eigen::MatrixXd assemble_neg_hessian(const EmCache& c, const LouisLayout& lay,
                                            const std::vector<Eigen::VectorXd>& efac,
                                            const Eigen::VectorXd& hz) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(lay.dim, lay.dim);
    for (int j = 0; j < c.m; ++j) {
        const Eigen::VectorXd e = c.exp_base[j].cwiseProduct(efac[j]);
        const Eigen::VectorXd le = c.cumhaz[j].cwiseProduct(e);
        const int b0 = lay.beta_start(j), t0 = lay.tau_index(j), l0 = lay.lambda_start(j);

        h.block(b0, b0, c.p, c.p).noalias() = c.X.transpose() * le.asDiagonal() * c.X;
        h(t0, t0) = c.zd.dot(le);
        const Eigen::VectorXd bt = c.X.transpose() * le.cwiseProduct(c.zd);
        h.block(b0, t0, c.p, 1) = bt;
        h.block(t0, b0, 1, c.p) = bt.transpose();

        // suffix sums of e, z e and x e for the baseline cross blocks
        Eigen::VectorXd suf_z(c.n + 1);
        Eigen::MatrixXd suf_x(c.p, c.n + 1);
        suf_z[c.n] = 0.0;
        suf_x.col(c.n).setZero();
        for (int posn = c.n - 1; posn >= 0; --posn) {
            const int i = c.order_asc[posn];
            suf_z[posn] = suf_z[posn + 1] + c.zd[i] * e[i];
            suf_x.col(posn) = suf_x.col(posn + 1) + e[i] * c.X.row(i).transpose();
        }
        for (int kidx = 0; kidx < lay.d[j]; ++kidx) {
            const int pos = c.lam_pos[j][kidx];
            const int lk = l0 + kidx;
            h(lk, lk) = c.lam_dcount[j][kidx] /
                        (c.lam_inc[j][kidx] * c.lam_inc[j][kidx]);
            h.block(b0, lk, c.p, 1) = suf_x.col(pos);
            h.block(lk, b0, 1, c.p) = suf_x.col(pos).transpose();
            h(t0, lk) = suf_z[pos];
            h(lk, t0) = suf_z[pos];
        }
    }
    h.block(lay.probit_start, lay.probit_start, c.q, c.q).noalias() =
        c.design.transpose() * hz.asDiagonal() * c.design;
    return h;
}

inline double probit_point_score(double eta, int z) {
    return z == 1 ? inv_mills(eta) : -inv_mills(-eta);
}

inline double probit_point_curvature(double eta, int z) {
    if (z == 1) {
        const double r = inv_mills(eta);
        return r * (r + eta);
    }
    const double r = inv_mills(-eta);
    return r * (r - eta);
}

} // namespace detail

inline Eigen::VectorXd complete_score(const Dataset& data, const ModelEstimate& theta,
                                      const SensitivityParams& sens,
                                      const std::vector<int>& u) {
    const detail::EmCache c = detail::build_em_cache(data, theta);
    const LouisLayout lay = louis_layout(data, theta);
    std::vector<Eigen::VectorXd> efac(c.m);
    for (int j = 0; j < c.m; ++j) {
        const double ez = std::exp(sens.zeta[j]);
        efac[j].resize(c.n);
        for (int i = 0; i < c.n; ++i) efac[j][i] = u[i] == 1 ? ez : 1.0;
    }
    Eigen::VectorXd gz(c.n);
    for (int i = 0; i < c.n; ++i) {
        const double eta = c.base_z[i] + sens.zeta_z * u[i];
        gz[i] = detail::probit_point_score(eta, data.records[i].treat);
    }
    return detail::assemble_score(c, lay, efac, gz);
}

inline Eigen::MatrixXd complete_hessian(const Dataset& data, const ModelEstimate& theta,
                                        const SensitivityParams& sens,
                                        const std::vector<int>& u) {
    const detail::EmCache c = detail::build_em_cache(data, theta);
    const LouisLayout lay = louis_layout(data, theta);
    std::vector<Eigen::VectorXd> efac(c.m);
    for (int j = 0; j < c.m; ++j) {
        const double ez = std::exp(sens.zeta[j]);
        efac[j].resize(c.n);
        for (int i = 0; i < c.n; ++i) efac[j][i] = u[i] == 1 ? ez : 1.0;
    }
    Eigen::VectorXd hz(c.n);
    for (int i = 0; i < c.n; ++i) {
        const double eta = c.base_z[i] + sens.zeta_z * u[i];
        hz[i] = detail::probit_point_curvature(eta, data.records[i].treat);
    }
    return -detail::assemble_neg_hessian(c, lay, efac, hz);
}

// E[s | obs]: every per-subject function of u is replaced by its posterior
// expectation. Vanishes at an M-step maximizer.
inline Eigen::VectorXd expected_score(const Dataset& data, const ModelEstimate& theta,
                                      const SensitivityParams& sens,
                                      const PosteriorU& post) {
    const detail::EmCache c = detail::build_em_cache(data, theta);
    const LouisLayout lay = louis_layout(data, theta);
    std::vector<Eigen::VectorXd> efac(c.m);
    for (int j = 0; j < c.m; ++j) {
        const double ez = std::exp(sens.zeta[j]);
        efac[j].resize(c.n);
        for (int i = 0; i < c.n; ++i)
            efac[j][i] = post.probs[i] * ez + (1.0 - post.probs[i]);
    }
    Eigen::VectorXd gz(c.n);
    for (int i = 0; i < c.n; ++i) {
        const int z = data.records[i].treat;
        gz[i] = post.probs[i] * detail::probit_point_score(c.base_z[i] + sens.zeta_z, z) +
                (1.0 - post.probs[i]) * detail::probit_point_score(c.base_z[i], z);
    }
    return detail::assemble_score(c, lay, efac, gz);
}

inline Eigen::MatrixXd expected_neg_hessian(const Dataset& data, const ModelEstimate& theta,
                                            const SensitivityParams& sens,
                                            const PosteriorU& post) {
    const detail::EmCache c = detail::build_em_cache(data, theta);
    const LouisLayout lay = louis_layout(data, theta);
    std::vector<Eigen::VectorXd> efac(c.m);
    for (int j = 0; j < c.m; ++j) {
        const double ez = std::exp(sens.zeta[j]);
        efac[j].resize(c.n);
        for (int i = 0; i < c.n; ++i)
            efac[j][i] = post.probs[i] * ez + (1.0 - post.probs[i]);
    }
    Eigen::VectorXd hz(c.n);
    for (int i = 0; i < c.n; ++i) {
        const int z = data.records[i].treat;
        hz[i] = post.probs[i] * detail::probit_point_curvature(c.base_z[i] + sens.zeta_z, z) +
                (1.0 - post.probs[i]) * detail::probit_point_curvature(c.base_z[i], z);
    }
    return detail::assemble_neg_hessian(c, lay, efac, hz);
}

// Observed-data log-likelihood: per record, log-sum-exp over the two
// confounder branches of the joint log-density.
inline double observed_loglik(const Dataset& data, const ModelEstimate& theta,
                              const SensitivityParams& sens) {
    double ll = 0.0;
    for (int i = 0; i < data.n(); ++i) {
        const double ld1 = joint_logdensity(data.records[i], theta, sens, 1);
        const double ld0 = joint_logdensity(data.records[i], theta, sens, 0);
        const double hi = std::max(ld1, ld0);
        ll += hi + std::log1p(std::exp(std::min(ld1, ld0) - hi));
    }
    return ll;
}

// Fits of the outcome and treatment models ignoring the confounder; the EM
// initialization and the zero-sensitivity fixed point. Model-based SEs for
// the treatment effects are attached.
inline ModelEstimate no_u_fit(const Dataset& data, bool probit_intercept = true,
                              const NewtonControl& ctrl = NewtonControl{}) {
    ModelEstimate theta;
    theta.probit_intercept = probit_intercept;
    const int p = data.p();
    const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(data.n());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.n());
    theta.se_tau.resize(data.n_causes);
    for (int j = 1; j <= data.n_causes; ++j) {
        const CoxData slice = cox_slice(data, j);
        const CoxFit fit = fit_cox(slice, zeros, ones, Eigen::VectorXd::Zero(p + 1), ctrl);
        CauseEstimate ce;
        ce.beta = fit.coef.head(p);
        ce.tau = fit.coef[p];
        ce.baseline = fit.baseline;
        theta.causes.push_back(std::move(ce));
        theta.se_tau[j - 1] = std::sqrt(fit.cov(p, p));
    }
    const Eigen::MatrixXd design = make_probit_design(data, probit_intercept);
    theta.beta_z = fit_probit(data.treat_vector(), design, Eigen::VectorXd(),
                              Eigen::VectorXd::Zero(design.cols()), ctrl).coef;
    return theta;
}

inline PosteriorU e_step(const Dataset& data, const ModelEstimate& theta,
                         const SensitivityParams& sens) {
    return posterior_u(data, theta, sens);
}

// Maximizes the conditional expectation of the complete-data log-likelihood.
// Outcome part: per-cause Cox fit with subject offsets
//   log E[exp(zeta_j u_i) | obs] = log(post_i e^{zeta_j} + 1 - post_i);
// treatment part: the posterior mixture probit objective.
inline ModelEstimate m_step(const Dataset& data, const PosteriorU& post,
                            const SensitivityParams& sens, const ModelEstimate& prev,
                            const NewtonControl& ctrl = NewtonControl{}) {
    const int p = data.p();
    ModelEstimate theta;
    theta.probit_intercept = prev.probit_intercept;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.n());
    for (int j = 1; j <= data.n_causes; ++j) {
        Eigen::VectorXd offsets(data.n());
        const double em1 = std::expm1(sens.zeta[j - 1]);
        for (int i = 0; i < data.n(); ++i)
            offsets[i] = std::log1p(post.probs[i] * em1);
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
    }
    const Eigen::MatrixXd design = make_probit_design(data, prev.probit_intercept);
    theta.beta_z = fit_q2_probit(data.treat_vector(), design, sens.zeta_z, post.probs,
                                 prev.beta_z, ctrl).coef;
    return theta;
}

struct LouisResult {
    Eigen::MatrixXd information;
    Eigen::VectorXd se_tau;
    Eigen::MatrixXd tau_cov;
};

inline LouisResult louis_information(const Dataset& data, const ModelEstimate& theta,
                                     const SensitivityParams& sens, const EmControl& ctrl) {
    sens.validate(theta.m());
    if (ctrl.louis_draws < 1) throw error("louis_information: need at least one draw");
    const PosteriorU post = posterior_u(data, theta, sens);
    const detail::EmCache c = detail::build_em_cache(data, theta);
    const LouisLayout lay = louis_layout(data, theta);

    const Eigen::MatrixXd first = detail::assemble_neg_hessian(
        c, lay,
        [&] {
            std::vector<Eigen::VectorXd> efac(c.m);
            for (int j = 0; j < c.m; ++j) {
                const double ez = std::exp(sens.zeta[j]);
                efac[j].resize(c.n);
                for (int i = 0; i < c.n; ++i)
                    efac[j][i] = post.probs[i] * ez + (1.0 - post.probs[i]);
            }
            return efac;
        }(),
        [&] {
            Eigen::VectorXd hz(c.n);
            for (int i = 0; i < c.n; ++i) {
                const int z = data.records[i].treat;
                hz[i] = post.probs[i] *
                            detail::probit_point_curvature(c.base_z[i] + sens.zeta_z, z) +
                        (1.0 - post.probs[i]) *
                            detail::probit_point_curvature(c.base_z[i], z);
            }
            return hz;
        }());

    // Monte-Carlo average of s s' over posterior draws of the full U vector
    Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(lay.dim, lay.dim);
    RandomStream stream(ctrl.seed, kLouisStream);
    std::vector<int> u(c.n);
    std::vector<Eigen::VectorXd> efac(c.m);
    for (int j = 0; j < c.m; ++j) efac[j].resize(c.n);
    Eigen::VectorXd gz(c.n);
    for (int b = 0; b < ctrl.louis_draws; ++b) {
        for (int i = 0; i < c.n; ++i) u[i] = stream.next() < post.probs[i] ? 1 : 0;
        for (int j = 0; j < c.m; ++j) {
            const double ez = std::exp(sens.zeta[j]);
            for (int i = 0; i < c.n; ++i) efac[j][i] = u[i] == 1 ? ez : 1.0;
        }
        for (int i = 0; i < c.n; ++i) {
            gz[i] = detail::probit_point_score(c.base_z[i] + sens.zeta_z * u[i],
                                               data.records[i].treat);
        }
        const Eigen::VectorXd s = detail::assemble_score(c, lay, efac, gz);
        m2.selfadjointView<Eigen::Lower>().rankUpdate(s, 1.0);
    }
    m2 = m2.selfadjointView<Eigen::Lower>();
    m2 /= static_cast<double>(ctrl.louis_draws);

    LouisResult res;
    res.information = first - m2;
    res.information = 0.5 * (res.information + res.information.transpose()).eval();

    Eigen::LDLT<Eigen::MatrixXd> ldlt(res.information);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
        const double lam_min =
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(res.information)
                .eigenvalues()
                .minCoeff();
        throw error("louis_information: singular information matrix (smallest eigenvalue " +
                    std::to_string(lam_min) + ")");
    }
    res.se_tau.resize(lay.m);
    res.tau_cov.resize(lay.m, lay.m);
    Eigen::MatrixXd cols(lay.dim, lay.m);
    for (int j = 0; j < lay.m; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(lay.dim);
        e[lay.tau_index(j)] = 1.0;
        cols.col(j) = ldlt.solve(e);
    }
    for (int j = 0; j < lay.m; ++j) {
        for (int l = 0; l < lay.m; ++l) res.tau_cov(j, l) = cols(lay.tau_index(j), l);
        res.se_tau[j] = std::sqrt(res.tau_cov(j, j));
    }
    return res;
}

// Alternates E- and M-steps from the no-confounder initialization, then
// attaches Louis standard errors. Deterministic given ctrl.seed (used only
// by the Monte-Carlo part of the variance).
inline ModelEstimate run_em(const Dataset& data, const SensitivityParams& sens,
                            const EmControl& ctrl = EmControl{},
                            bool probit_intercept = true) {
    sens.validate(data.n_causes);
    if (ctrl.max_iter < 1) throw error("run_em: max_iter must be >= 1");
    ModelEstimate theta = no_u_fit(data, probit_intercept);
    theta.se_tau.resize(0);

    const LouisLayout lay = louis_layout(data, theta);
    Eigen::VectorXd packed = louis_pack(theta, lay);
    for (int it = 1; it <= ctrl.max_iter; ++it) {
        const PosteriorU post = e_step(data, theta, sens);
        ModelEstimate next = m_step(data, post, sens, theta);
        const Eigen::VectorXd next_packed = louis_pack(next, lay);
        const double relchange =
            ((next_packed - packed).cwiseAbs().array() /
             (1.0 + packed.cwiseAbs().array())).maxCoeff();
        packed = next_packed;
        next.em_iterations = it;
        theta = std::move(next);
        if (ctrl.rel_tol > 0.0 && relchange < ctrl.rel_tol) {
            theta.em_converged = true;
            break;
        }
    }

    const LouisResult louis = louis_information(data, theta, sens, ctrl);
    theta.se_tau = louis.se_tau;
    theta.tau_cov = louis.tau_cov;
    return theta;
}

} // namespace survsens
