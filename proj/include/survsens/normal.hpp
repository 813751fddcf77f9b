#pragma once

// Standard normal pdf/cdf/quantile with tail-safe logarithms.
// The log-CDF switches to an asymptotic expansion deep in the lower tail
// where log(Phi(x)) would underflow, and clamps |x| at 35 so downstream
// optimizers never see -inf.

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace survsens {

inline constexpr double kLogSqrt2Pi = 0.9189385332046727417803297364056;
inline constexpr double kSqrt1_2 = 0.7071067811865475244008443621048;

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x - kLogSqrt2Pi);
}

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * kSqrt1_2);
}

// log Phi(x), finite for all inputs. |x| is clamped at 35; below -8 the
// expansion log Phi(x) ~ -x^2/2 - log(-x) - log sqrt(2 pi) + log(1 - 1/x^2 + 3/x^4)
// is used.
inline double norm_logcdf(double x) {
    const double v = std::clamp(x, -35.0, 35.0);
    if (v < -8.0) {
        const double v2 = v * v;
        return -0.5 * v2 - std::log(-v) - kLogSqrt2Pi
            + std::log1p(-1.0 / v2 + 3.0 / (v2 * v2));
    }
    if (v > 8.0) {
        return std::log1p(-norm_cdf(-v));
    }
    return std::log(norm_cdf(v));
}

// phi(x)/Phi(x), the lower-tail inverse Mills ratio. Evaluated through the
// stable log-CDF for negative arguments so it never becomes 0/0.
inline double inv_mills(double x) {
    if (x > -1.0) return norm_pdf(x) / norm_cdf(x);
    const double v = std::clamp(x, -35.0, 35.0);
    return std::exp(-0.5 * v * v - kLogSqrt2Pi - norm_logcdf(v));
}

// Standard normal quantile (Wichura's PPND16 rational approximations,
// accurate to ~1e-15 over (0,1)).
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("norm_quantile: argument must lie strictly in (0,1)");
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            q * (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r
                + 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r
                + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r
                + 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r
                + 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r
                + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r
                + 4.2313330701600911252e+1) * r + 1.0);
        return num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                + 2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r
                + 3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r
                + 4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                + 6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r
                + 2.05319162663775882187e+0) * r + 1.0);
        x = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                + 2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r
                + 5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0);
        x = num / den;
    }
    return (q < 0.0) ? -x : x;
}

} // namespace survsens
