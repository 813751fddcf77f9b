#pragma once

// Semiparametric Cox proportional-hazards engine: weighted partial
// likelihood with per-subject offsets, Newton-Raphson with step-halving,
// Breslow baseline increments, model-based and robust (sandwich) variance.
// Ties are handled with the Breslow convention throughout.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "survsens/dataset.hpp"

namespace survsens {

// Discrete baseline hazard: increments at strictly increasing event times.
// The cumulative hazard is the right-continuous step function through the
// increments, 0 before the first event time and constant after the last.
struct BaselineHazard {
    Eigen::VectorXd event_times;
    Eigen::VectorXd increments;
    Eigen::VectorXd cumulative; // prefix sums of increments

    int size() const { return static_cast<int>(event_times.size()); }

    double cumulative_at(double t) const {
        // index of last event time <= t
        int lo = 0, hi = size();
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (event_times[mid] <= t) lo = mid + 1; else hi = mid;
        }
        return (lo == 0) ? 0.0 : cumulative[lo - 1];
    }

    double increment_at(double t) const {
        int lo = 0, hi = size();
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (event_times[mid] < t) lo = mid + 1; else hi = mid;
        }
        if (lo < size() && event_times[lo] == t) return increments[lo];
        return 0.0;
    }
};

inline BaselineHazard make_baseline(Eigen::VectorXd times, Eigen::VectorXd incs) {
    BaselineHazard b;
    b.event_times = std::move(times);
    b.increments = std::move(incs);
    b.cumulative.resize(b.increments.size());
    double acc = 0.0;
    for (int k = 0; k < b.increments.size(); ++k) {
        acc += b.increments[k];
        b.cumulative[k] = acc;
    }
    return b;
}

// One-cause slice of a Dataset: event = 1 for failures of the requested
// type, design columns are [covariates..., treat] so the treatment
// coefficient is the last entry of coef.
struct CoxData {
    Eigen::VectorXd time;
    Eigen::VectorXi event;
    Eigen::MatrixXd X;

    int n() const { return static_cast<int>(time.size()); }
    int k() const { return static_cast<int>(X.cols()); }
};

inline CoxData cox_slice(const Dataset& data, int cause) {
    const int n = data.n(), p = data.p();
    CoxData s;
    s.time.resize(n);
    s.event.resize(n);
    s.X.resize(n, p + 1);
    for (int i = 0; i < n; ++i) {
        const SurvivalRecord& r = data.records[i];
        s.time[i] = r.time;
        s.event[i] = (r.status == 1 && r.cause == cause) ? 1 : 0;
        s.X.row(i).head(p) = r.covariates.transpose();
        s.X(i, p) = static_cast<double>(r.treat);
    }
    return s;
}

// Treatment-only slice for marginal structural fits.
inline CoxData cox_slice_treat_only(const Dataset& data, int cause) {
    const int n = data.n();
    CoxData s;
    s.time.resize(n);
    s.event.resize(n);
    s.X.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        const SurvivalRecord& r = data.records[i];
        s.time[i] = r.time;
        s.event[i] = (r.status == 1 && r.cause == cause) ? 1 : 0;
        s.X(i, 0) = static_cast<double>(r.treat);
    }
    return s;
}

struct NewtonControl {
    int max_iter = 100;
    double tol = 1e-8;       // max-abs gradient at convergence
    double coef_bound = 50.0; // separation guard
};

struct CoxFit {
    Eigen::VectorXd coef;
    Eigen::MatrixXd cov;   // inverse information at coef
    BaselineHazard baseline;
    double loglik = 0.0;
    int iterations = 0;
};

namespace detail {

inline std::vector<int> time_order(const Eigen::VectorXd& time) {
    std::vector<int> order(time.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return time[a] < time[b]; });
    return order;
}

// One descending sweep over time computing the weighted offset partial
// likelihood and, optionally, score and information. Linear predictors are
// globally shifted by their maximum so risk sums cannot overflow.
struct CoxSweep {
    double loglik = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd info; // negative Hessian

    CoxSweep(const CoxData& d, const Eigen::VectorXd& coef,
             const Eigen::VectorXd& offsets, const Eigen::VectorXd& weights,
             const std::vector<int>& order, bool derivatives) {
        const int n = d.n(), k = d.k();
        Eigen::VectorXd eta = d.X * coef + offsets;
        for (int i = 0; i < n; ++i) {
            if (!std::isfinite(eta[i])) throw error("non-finite linear predictor");
        }
        const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
        Eigen::VectorXd r(n); // w * exp(eta - shift)
        for (int i = 0; i < n; ++i) r[i] = weights[i] * std::exp(eta[i] - shift);

        if (derivatives) {
            score = Eigen::VectorXd::Zero(k);
            info = Eigen::MatrixXd::Zero(k, k);
        }
        double s0 = 0.0;
        Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
        Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(k, k);

        int pos = n - 1;
        while (pos >= 0) {
            const double t = d.time[order[pos]];
            double dead_w = 0.0, dead_eta = 0.0;
            Eigen::VectorXd dead_x = Eigen::VectorXd::Zero(k);
            // absorb the tie group at time t into the risk set
            while (pos >= 0 && d.time[order[pos]] == t) {
                const int i = order[pos];
                s0 += r[i];
                if (derivatives) {
                    s1.noalias() += r[i] * d.X.row(i).transpose();
                    s2.noalias() += r[i] * d.X.row(i).transpose() * d.X.row(i);
                }
                if (d.event[i] == 1 && weights[i] > 0.0) {
                    dead_w += weights[i];
                    dead_eta += weights[i] * eta[i];
                    if (derivatives) dead_x.noalias() += weights[i] * d.X.row(i).transpose();
                }
                --pos;
            }
            if (dead_w > 0.0) {
                loglik += dead_eta - dead_w * (std::log(s0) + shift);
                if (derivatives) {
                    const Eigen::VectorXd xbar = s1 / s0;
                    score.noalias() += dead_x - dead_w * xbar;
                    info.noalias() += dead_w * (s2 / s0 - xbar * xbar.transpose());
                }
            }
        }
    }
};

} // namespace detail

// Weighted log partial likelihood with offsets (Breslow tie handling).
inline double cox_loglik(const CoxData& data, const Eigen::VectorXd& coef,
                         const Eigen::VectorXd& offsets,
                         const Eigen::VectorXd& weights) {
    const std::vector<int> order = detail::time_order(data.time);
    return detail::CoxSweep(data, coef, offsets, weights, order, false).loglik;
}

inline void cox_derivatives(const CoxData& data, const Eigen::VectorXd& coef,
                            const Eigen::VectorXd& offsets,
                            const Eigen::VectorXd& weights, double& loglik,
                            Eigen::VectorXd& score, Eigen::MatrixXd& info) {
    const std::vector<int> order = detail::time_order(data.time);
    detail::CoxSweep sweep(data, coef, offsets, weights, order, true);
    loglik = sweep.loglik;
    score = sweep.score;
    info = sweep.info;
}

// Breslow increments at distinct event times with positive weighted death
// counts: (weighted deaths at t) / (weighted risk-set sum at t).
inline BaselineHazard breslow_baseline(const CoxData& data,
                                       const Eigen::VectorXd& coef,
                                       const Eigen::VectorXd& offsets,
                                       const Eigen::VectorXd& weights) {
    const int n = data.n();
    Eigen::VectorXd eta = data.X * coef + offsets;
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(eta[i])) throw error("non-finite linear predictor");
    }
    const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
    const std::vector<int> order = detail::time_order(data.time);

    std::vector<double> times, incs;
    double s0 = 0.0;
    int pos = n - 1;
    while (pos >= 0) {
        const double t = data.time[order[pos]];
        double dead_w = 0.0;
        while (pos >= 0 && data.time[order[pos]] == t) {
            const int i = order[pos];
            s0 += weights[i] * std::exp(eta[i] - shift);
            if (data.event[i] == 1) dead_w += weights[i];
            --pos;
        }
        if (dead_w > 0.0) {
            if (s0 <= 0.0) throw error("empty risk set at an event time");
            times.push_back(t);
            incs.push_back(dead_w / (s0 * std::exp(shift)));
        }
    }
    std::reverse(times.begin(), times.end());
    std::reverse(incs.begin(), incs.end());
    Eigen::VectorXd tv = Eigen::Map<Eigen::VectorXd>(times.data(), times.size());
    Eigen::VectorXd iv = Eigen::Map<Eigen::VectorXd>(incs.data(), incs.size());
    return make_baseline(std::move(tv), std::move(iv));
}

// Newton-Raphson with step-halving; only likelihood-improving steps are
// accepted, so the fitted log partial likelihood never drops below the
// value at init.
inline CoxFit fit_cox(const CoxData& data, const Eigen::VectorXd& offsets,
                      const Eigen::VectorXd& weights, const Eigen::VectorXd& init,
                      const NewtonControl& ctrl = NewtonControl{}) {
    const int k = data.k();
    double wev = 0.0;
    for (int i = 0; i < data.n(); ++i)
        if (data.event[i] == 1) wev += weights[i];
    if (wev <= 0.0) throw error("fit_cox: no events with positive weight");

    const std::vector<int> order = detail::time_order(data.time);
    Eigen::VectorXd coef = init;
    double loglik;
    Eigen::VectorXd score;
    Eigen::MatrixXd info;
    {
        detail::CoxSweep sweep(data, coef, offsets, weights, order, true);
        loglik = sweep.loglik;
        score = sweep.score;
        info = sweep.info;
    }

    int it = 0;
    for (; it < ctrl.max_iter; ++it) {
        if (score.lpNorm<Eigen::Infinity>() < ctrl.tol) break;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
            throw error("fit_cox: singular information matrix");
        const Eigen::VectorXd direction = ldlt.solve(score);

        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h < 30; ++h, step *= 0.5) {
            const Eigen::VectorXd cand = coef + step * direction;
            detail::CoxSweep sweep(data, cand, offsets, weights, order, true);
            if (sweep.loglik > loglik) {
                coef = cand;
                loglik = sweep.loglik;
                score = sweep.score;
                info = sweep.info;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (score.lpNorm<Eigen::Infinity>() < std::sqrt(ctrl.tol)) break;
            throw error("fit_cox: step-halving failed to improve the likelihood");
        }
        if (coef.lpNorm<Eigen::Infinity>() > ctrl.coef_bound)
            throw error("fit_cox: separation detected (|coef| > " +
                        std::to_string(ctrl.coef_bound) + ")");
    }
    if (it == ctrl.max_iter && score.lpNorm<Eigen::Infinity>() >= ctrl.tol)
        throw error("fit_cox: no convergence after " + std::to_string(ctrl.max_iter) +
                    " iterations");

    CoxFit fit;
    fit.coef = coef;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
        throw error("fit_cox: singular information matrix at the optimum");
    fit.cov = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();
    fit.baseline = breslow_baseline(data, coef, offsets, weights);
    fit.loglik = loglik;
    fit.iterations = it;
    return fit;
}

// Robust variance A^{-1} B A^{-1} with A the negative Hessian of the
// weighted log partial likelihood and B the sum of squared weighted
// per-subject score residuals
//   U_i = delta_i (x_i - xbar(t_i)) - e^{eta_i} sum_{t_d <= t_i} lambda_d (x_i - xbar(t_d)).
inline Eigen::MatrixXd sandwich_variance(const CoxData& data, const CoxFit& fit,
                                         const Eigen::VectorXd& weights,
                                         const Eigen::VectorXd& offsets_in = Eigen::VectorXd()) {
    const int n = data.n(), k = data.k();
    const Eigen::VectorXd offsets =
        offsets_in.size() == n ? offsets_in : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd eta = data.X * fit.coef + offsets;
    const double shift = eta.maxCoeff();
    const std::vector<int> order = detail::time_order(data.time);

    double dummy;
    Eigen::VectorXd dummy_score;
    Eigen::MatrixXd a;
    cox_derivatives(data, fit.coef, offsets, weights, dummy, dummy_score, a);

    // distinct event times, descending accumulation of risk sums
    std::vector<double> dt_time, dt_s0, dt_dw;
    std::vector<Eigen::VectorXd> dt_xbar;
    {
        double s0 = 0.0;
        Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
        int pos = n - 1;
        while (pos >= 0) {
            const double t = data.time[order[pos]];
            double dead_w = 0.0;
            while (pos >= 0 && data.time[order[pos]] == t) {
                const int i = order[pos];
                const double r = weights[i] * std::exp(eta[i] - shift);
                s0 += r;
                s1.noalias() += r * data.X.row(i).transpose();
                if (data.event[i] == 1) dead_w += weights[i];
                --pos;
            }
            if (dead_w > 0.0) {
                dt_time.push_back(t);
                dt_s0.push_back(s0);
                dt_dw.push_back(dead_w);
                dt_xbar.push_back(s1 / s0);
            }
        }
        std::reverse(dt_time.begin(), dt_time.end());
        std::reverse(dt_s0.begin(), dt_s0.end());
        std::reverse(dt_dw.begin(), dt_dw.end());
        std::reverse(dt_xbar.begin(), dt_xbar.end());
    }

    // ascending sweep: prefix hazard sums and weighted outer products
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, k);
    {
        double g0 = 0.0; // sum of lambda_d in shifted scale
        Eigen::VectorXd g1 = Eigen::VectorXd::Zero(k);
        std::size_t d = 0;
        int pos = 0;
        while (pos < n) {
            const double t = data.time[order[pos]];
            while (d < dt_time.size() && dt_time[d] <= t) {
                const double lam = dt_dw[d] / dt_s0[d];
                g0 += lam;
                g1.noalias() += lam * dt_xbar[d];
                ++d;
            }
            while (pos < n && data.time[order[pos]] == t) {
                const int i = order[pos];
                Eigen::VectorXd u = Eigen::VectorXd::Zero(k);
                if (data.event[i] == 1) {
                    // xbar at the subject's own event time
                    const auto it = std::lower_bound(dt_time.begin(), dt_time.end(), t);
                    if (it != dt_time.end() && *it == t) {
                        const std::size_t idx = static_cast<std::size_t>(it - dt_time.begin());
                        u = data.X.row(i).transpose() - dt_xbar[idx];
                    }
                }
                const double e = std::exp(eta[i] - shift);
                u.noalias() -= e * (g0 * data.X.row(i).transpose() - g1);
                const Eigen::VectorXd wu = weights[i] * u;
                b.noalias() += wu * wu.transpose();
                ++pos;
            }
        }
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw error("sandwich_variance: singular information matrix");
    const Eigen::MatrixXd ainv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd v = ainv * b * ainv;
    return 0.5 * (v + v.transpose());
}

} // namespace survsens
