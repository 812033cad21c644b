#pragma once

// Smooth localization and the truncated problem data. The cutoff b_M is
// odd, C^1, the identity on [-(M-1), M-1], saturates at +-M outside
// [-(M+1), M+1], and its derivative falls linearly from 1 to 0 across the
// ramp, so on [M-1, M+1]
//   b_M(x) = M - (M + 1 - x)^2 / 4,     giving b_M(M) = M - 1/4.
// Always 0 <= b_M' <= 1 and |b_M(x)| <= min(|x|, M).

#include "fbsde/functionals.hpp"
#include "fbsde/noise.hpp"
#include "fbsde/path.hpp"
#include "fbsde/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

struct TruncationLevel {
    double M = 2.0;
};

inline void validate_truncation_level(double M) {
    if (!(M > 1.0) || !std::isfinite(M))
        throw std::invalid_argument("truncation level M must be finite and > 1, got " + std::to_string(M));
}

inline double smooth_truncate(double x, double M) {
    double ax = std::fabs(x);
    if (ax <= M - 1.0) return x;
    double s = x < 0.0 ? -1.0 : 1.0;
    if (ax >= M + 1.0) return s * M;
    double u = M + 1.0 - ax;
    return s * (M - 0.25 * u * u);
}

inline double smooth_truncate_slope(double x, double M) {
    double ax = std::fabs(x);
    if (ax <= M - 1.0) return 1.0;
    if (ax >= M + 1.0) return 0.0;
    return 0.5 * (M + 1.0 - ax);
}

// b_M applied to a skeleton's values, with the ledger rewritten to the
// truncated increments: the new size at a jump time is
// b_M(v) - b_M(v - size), so values and ledger stay consistent.
inline PathSkeleton truncate_path(const PathSkeleton& p, double M) {
    validate_truncation_level(M);
    PathSkeleton out;
    out.times = p.times;
    out.values.resize(p.values.size());
    for (std::size_t k = 0; k < p.values.size(); ++k) out.values[k] = smooth_truncate(p.values[k], M);
    out.jumps.reserve(p.jumps.size());
    for (const auto& j : p.jumps) {
        double v = value_at(p, j.time);
        double ns = smooth_truncate(v, M) - smooth_truncate(v - j.size, M);
        out.jumps.push_back({j.time, ns});
    }
    return out;
}

// evaluate a functional on the truncated path without materializing it
inline double evaluate_functional_truncated(const PathFunctional& f, const PathSkeleton& p, double M) {
    PathSkeleton tp = truncate_path(p, M);
    return evaluate_functional(f, tp);
}

// ------------------------------------------------------------ driver ----

// h catalog: maps with h(0) = 0 and a locally Lipschitz profile in u
struct HSpec {
    enum class Kind { linear, power } kind = Kind::linear;
    double scale = 1.0;
    double power = 0.0; // power kind: scale * u * |u|^power

    double value(double /*t*/, double u) const {
        return kind == Kind::linear ? scale * u : scale * u * std::pow(std::fabs(u), power);
    }
};

// declared growth/regularity constants; validation is empirical
struct DriverParams {
    double c = 1.0;     // additive Lipschitz level in the profiles
    double ell = 1.0;   // z-growth exponent, >= 1
    double r = 0.0;     // path-weight exponent, 0 <= r <= 1/(2 ell)
    double alpha = 0.0; // terminal profile weight
    double beta = 0.0;  // driver path-profile weight
    double gamma = 0.0; // h profile weight
    double L_fy = 0.0;  // global Lipschitz constant in y
    double m1 = 0.0;    // u-slot growth exponent of f
    double m2 = 0.0;    // u growth exponent of h
    double k_f = 0.0;   // bound on |f(t, 0, 0, 0, 0)|
};

// f(t, x^t, y, z, u) as an affine combination of catalog terms:
//   f_const + path_coef*G(x^t) + y_coef*y + z_coef*z + z_pow_coef*|z|^ell z
//           + u_coef*u + u_pow_coef*|u|^m1 u
struct DriverSpec {
    PathFunctional g = make_functional(FunctionalKind::terminal_point);
    double f_const = 0.0;
    double path_coef = 0.0;
    PathFunctional path_functional = make_functional(FunctionalKind::sup_norm);
    double y_coef = 0.0;
    double z_coef = 0.0;
    double z_pow_coef = 0.0;
    double u_coef = 0.0;
    double u_pow_coef = 0.0;
    HSpec h;
    DriverParams params;

    bool uses_path_term() const { return path_coef != 0.0; }

    double f_value(double /*t*/, double path_term, double y, double z, double u) const {
        double v = f_const + path_coef * path_term + y_coef * y + z_coef * z + u_coef * u;
        if (z_pow_coef != 0.0) v += z_pow_coef * std::pow(std::fabs(z), params.ell) * z;
        if (u_pow_coef != 0.0) v += u_pow_coef * std::pow(std::fabs(u), params.m1) * u;
        return v;
    }
};

// All structural violations at once, each naming the inequality it breaks.
inline std::vector<std::string> validate_driver(const DriverSpec& d) {
    std::vector<std::string> bad;
    const auto& p = d.params;
    if (!(p.ell >= 1.0)) bad.push_back("driver.params: ell = " + std::to_string(p.ell) + " violates ell >= 1");
    if (!(p.r >= 0.0)) bad.push_back("driver.params: r must be nonnegative");
    if (p.r > 1.0 / (2.0 * p.ell) + 1e-12)
        bad.push_back("driver.params: r = " + std::to_string(p.r) + " violates r <= 1/(2 ell) = " +
                      std::to_string(1.0 / (2.0 * p.ell)));
    if (p.m1 < 0.0 || p.m2 < 0.0) bad.push_back("driver.params: m1 and m2 must be nonnegative");
    if (p.m1 + p.m1 * p.m2 + p.m2 > p.ell + 1e-12)
        bad.push_back("driver.params: m1 + m1*m2 + m2 = " + std::to_string(p.m1 + p.m1 * p.m2 + p.m2) +
                      " violates m1 + m1*m2 + m2 <= ell = " + std::to_string(p.ell));
    if (p.c < 0.0 || p.alpha < 0.0 || p.beta < 0.0 || p.gamma < 0.0)
        bad.push_back("driver.params: profile weights must be nonnegative");
    if (std::fabs(d.f_const) > p.k_f + 1e-12)
        bad.push_back("driver: |f(t,0,0,0,0)| = " + std::to_string(std::fabs(d.f_const)) +
                      " exceeds declared k_f = " + std::to_string(p.k_f));
    if (std::fabs(d.y_coef) > p.L_fy + 1e-12)
        bad.push_back("driver: |y_coef| exceeds declared L_fy");

    // h(s, 0) = 0 on sampled instants
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0})
        if (d.h.value(t, 0.0) != 0.0) {
            bad.push_back("driver.h: h(s, 0) != 0");
            break;
        }

    // monotone compatibility f_u * h_u >= -1, sampled by finite differences
    {
        CounterStream s(7, 0, StreamRole::scenario);
        double worst = 0.0;
        for (int i = 0; i < 64; ++i) {
            double u = 4.0 * (s.uniform(2 * i) - 0.5);
            double uu = 4.0 * (s.uniform(2 * i + 1) - 0.5);
            double eps = 1e-5;
            double fu = (d.f_value(0.0, 0.0, 0.0, 0.0, uu + eps) - d.f_value(0.0, 0.0, 0.0, 0.0, uu - eps)) /
                        (2.0 * eps);
            double hu = (d.h.value(0.0, u + eps) - d.h.value(0.0, u - eps)) / (2.0 * eps);
            worst = std::min(worst, fu * hu);
        }
        if (worst < -1.0 - 1e-6)
            bad.push_back("driver: monotone compatibility f_u * h_u >= -1 fails (sampled min = " +
                          std::to_string(worst) + ")");
    }
    return bad;
}

// H at one instant: the finite sum over atoms
//   sum_j h(t, U_j) * kappa(v_j) * lambda_j,   kappa(v) = 1 ^ |v|,
// with U passed through b_M first when a truncation level is given.
inline double h_integral(const DriverSpec& d, const JumpMeasure& measure, double t,
                         const std::vector<double>& u_values, double M = 0.0) {
    if (u_values.size() != measure.atoms.size())
        throw std::invalid_argument("h_integral: one U value per atom required");
    double acc = 0.0;
    for (std::size_t j = 0; j < measure.atoms.size(); ++j) {
        double u = M > 0.0 ? smooth_truncate(u_values[j], M) : u_values[j];
        acc += d.h.value(t, u) * jump_weight(measure.atoms[j].mark) * measure.atoms[j].intensity;
    }
    return acc;
}

// The localized data: g^M evaluates g on the truncated path, f^M feeds
// b_M(z) and b_M(u) through the driver (y stays untouched), and the
// H-channel is built from b_M(U) upstream in h_integral.
struct TruncatedData {
    const DriverSpec* driver = nullptr;
    double M = 0.0;

    double g_value(const PathSkeleton& path) const {
        return evaluate_functional_truncated(driver->g, path, M);
    }
    double f_value(double t, double truncated_path_term, double y, double z, double u) const {
        return driver->f_value(t, truncated_path_term, y, smooth_truncate(z, M), smooth_truncate(u, M));
    }
};

inline TruncatedData truncated_data(const DriverSpec& d, double M) {
    validate_truncation_level(M);
    return TruncatedData{&d, M};
}

} // namespace fbsde
