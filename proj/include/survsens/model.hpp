#pragma once

// Shared model-state types for the latent-confounder estimators.

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "survsens/coxph.hpp"

namespace survsens {

// Fixed, known sensitivity coefficients: confounder-to-treatment (zeta_z),
// confounder-to-outcome per cause (zeta), and confounder prevalence pi.
struct SensitivityParams {
    double zeta_z = 0.0;
    Eigen::VectorXd zeta; // length m
    double pi = 0.5;

    static SensitivityParams zero(int m) {
        SensitivityParams s;
        s.zeta = Eigen::VectorXd::Zero(m);
        return s;
    }

    void validate(int m) const {
        if (!std::isfinite(zeta_z)) throw error("sensitivity: non-finite zeta_z");
        if (static_cast<int>(zeta.size()) != m)
            throw error("sensitivity: zeta length must equal the number of causes");
        for (int j = 0; j < zeta.size(); ++j)
            if (!std::isfinite(zeta[j])) throw error("sensitivity: non-finite zeta");
        if (!(pi > 0.0 && pi < 1.0)) throw error("sensitivity: pi must lie in (0,1)");
    }
};

// Per-subject Bernoulli probability of the latent confounder given the
// observed data.
struct PosteriorU {
    Eigen::VectorXd probs;
};

struct CauseEstimate {
    double tau = 0.0;        // treatment log-hazard-ratio
    Eigen::VectorXd beta;    // covariate coefficients
    BaselineHazard baseline;
};

// Full parameter state: treatment-model coefficients, per-cause regression
// coefficients / treatment effects / discrete baselines, and, once variance
// has been computed, standard errors for the treatment effects.
struct ModelEstimate {
    Eigen::VectorXd beta_z;
    bool probit_intercept = true; // whether beta_z[0] is an intercept
    std::vector<CauseEstimate> causes;
    Eigen::VectorXd se_tau;  // length m when computed, else empty
    Eigen::MatrixXd tau_cov; // m x m when computed, else empty
    int em_iterations = 0;
    bool em_converged = false;

    int m() const { return static_cast<int>(causes.size()); }
};

} // namespace survsens
