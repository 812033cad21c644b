#pragma once

// Small statistics helpers shared by the solver diagnostics and the test
// suites: moments, order-statistic quantiles, a chi-square critical value,
// and the pinball-loss quantile fits used for bound constants.

#include "fbsde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fbsde {

struct MeanStats {
    double mean = 0.0;
    double variance = 0.0; // unbiased
    double std_error = 0.0;
    std::size_t n = 0;
};

inline MeanStats mean_stats(const std::vector<double>& xs) {
    MeanStats st;
    st.n = xs.size();
    if (st.n == 0) throw std::invalid_argument("mean_stats: empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    st.mean = s / static_cast<double>(st.n);
    if (st.n > 1) {
        double q = 0.0;
        for (double x : xs) {
            double d = x - st.mean;
            q += d * d;
        }
        st.variance = q / static_cast<double>(st.n - 1);
        st.std_error = std::sqrt(st.variance / static_cast<double>(st.n));
    }
    return st;
}

// q-quantile as the ceil(q*n)-th order statistic (1-based), so the
// fraction of strictly larger sample points is at most 1-q. That upper
// rounding is what makes the fitted bound constants honest: at q = 0.99
// no more than 1% of points can sit above the fitted level.
inline double quantile_upper(std::vector<double> xs, double q) {
    if (xs.empty()) throw std::invalid_argument("quantile_upper: empty sample");
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile_upper: q must lie in (0,1]");
    std::size_t k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(xs.size())));
    if (k == 0) k = 1;
    if (k > xs.size()) k = xs.size();
    std::nth_element(xs.begin(), xs.begin() + (k - 1), xs.end());
    return xs[k - 1];
}

// Chi-square critical value via the Wilson-Hilferty cube approximation.
// Plenty for goodness-of-fit gates at the 1e-3 significance we use.
inline double chi_square_quantile(double prob, double dof) {
    if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("chi_square_quantile: prob in (0,1)");
    if (!(dof >= 1.0)) throw std::invalid_argument("chi_square_quantile: dof >= 1");
    double z = inverse_normal_cdf(prob);
    double t = 1.0 - 2.0 / (9.0 * dof) + z * std::sqrt(2.0 / (9.0 * dof));
    return dof * t * t * t;
}

// Pinball (quantile) loss sum for response r against level a.
inline double pinball_loss(const std::vector<double>& residuals, double a, double tau) {
    double s = 0.0;
    for (double r : residuals) {
        double u = r - a;
        s += u >= 0.0 ? tau * u : (tau - 1.0) * u;
    }
    return s;
}

// Fit the tau-quantile line  response ~ a + b * regressor  with b >= 0 by
// profiling a out (for fixed b the optimal intercept is the tau-quantile
// of response - b*regressor) and golden-section search over b. The
// objective is convex in (a,b), so the profiled objective is convex too.
struct QuantileLineFit {
    double a = 0.0;
    double b = 0.0;
    double violation_rate = 0.0; // fraction strictly above a + b*x
};

inline QuantileLineFit fit_quantile_line(const std::vector<double>& response,
                                         const std::vector<double>& regressor, double tau) {
    if (response.size() != regressor.size() || response.empty())
        throw std::invalid_argument("fit_quantile_line: size mismatch or empty");
    const std::size_t n = response.size();

    auto profiled = [&](double b, double* a_out) {
        std::vector<double> res(n);
        for (std::size_t i = 0; i < n; ++i) res[i] = response[i] - b * regressor[i];
        double a = quantile_upper(res, tau);
        if (a_out) *a_out = a;
        return pinball_loss(res, a, tau);
    };

    // bracket b: slopes beyond q(resp)/median(reg) scale buy nothing
    double xmax = 0.0, rmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xmax = std::max(xmax, std::fabs(regressor[i]));
        rmax = std::max(rmax, std::fabs(response[i]));
    }
    double bhi = xmax > 0.0 ? 4.0 * rmax / xmax + 1.0 : 1.0;
    double lo = 0.0, hi = bhi;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double m1 = hi - gr * (hi - lo), m2 = lo + gr * (hi - lo);
    double f1 = profiled(m1, nullptr), f2 = profiled(m2, nullptr);
    for (int it = 0; it < 80 && (hi - lo) > 1e-10 * (1.0 + bhi); ++it) {
        if (f1 <= f2) {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - gr * (hi - lo);
            f1 = profiled(m1, nullptr);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + gr * (hi - lo);
            f2 = profiled(m2, nullptr);
        }
    }
    QuantileLineFit fit;
    fit.b = 0.5 * (lo + hi);
    // compare against the boundary b = 0, which the bracket may have lost
    double a_mid;
    double loss_mid = profiled(fit.b, &a_mid);
    double a_zero;
    double loss_zero = profiled(0.0, &a_zero);
    if (loss_zero <= loss_mid) {
        fit.b = 0.0;
        fit.a = a_zero;
    } else {
        fit.a = a_mid;
    }
    std::size_t above = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (response[i] > fit.a + fit.b * regressor[i]) ++above;
    fit.violation_rate = static_cast<double>(above) / static_cast<double>(n);
    return fit;
}

} // namespace fbsde
