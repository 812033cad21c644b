#pragma once

// Moment bounds for processes dominated through their running supremum:
// the linear (Gronwall) case, the x|log x| (Bihari-LaSalle) case with its
// closed-form G pair, the bound-iteration fixed point, and the two-term
// stability bound with its integer minimizer. Checks are Monte Carlo: the
// inequalities are exact in expectation, so the pass criterion concedes
// only three relative standard errors of sampling slack on the left side.

#include "fbsde/forward.hpp"
#include "fbsde/stats.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fbsde {

struct EtaSpec {
    enum class Kind { linear, xlogx } kind = Kind::linear;
    double r = 2.718281828459045; // domain floor for the xlogx case, > 1
};

// Terminal summaries of one dominated-process sample: the running sup of
// the nonnegative process, the terminal value of the nondecreasing H, and
// the deterministic A_T.
struct GronwallInstance {
    EtaSpec eta;
    double p = 0.5;
    std::vector<double> sup_x;
    std::vector<double> h_T;
    double a_T = 0.0;
};

struct InequalityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0; // rhs * (1 + band) - lhs
    double rel_se = 0.0; // relative standard error of lhs
    bool pass = false;
    std::size_t n = 0;
};

namespace detail {

inline void validate_instance(const GronwallInstance& inst) {
    if (!(inst.p > 0.0 && inst.p < 1.0))
        throw std::invalid_argument("inequality: p must lie in (0,1)");
    if (inst.sup_x.empty() || inst.sup_x.size() != inst.h_T.size())
        throw std::invalid_argument("inequality: sup_x and h_T must align and be nonempty");
    if (!(inst.a_T >= 0.0)) throw std::invalid_argument("inequality: A_T must be nonnegative");
    for (double v : inst.sup_x)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("inequality: process sups must be finite and nonnegative");
    for (double v : inst.h_T)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("inequality: H_T must be finite and nonnegative");
}

inline InequalityReport finish_report(std::vector<double> lhs_paths, double rhs) {
    MeanStats st = mean_stats(lhs_paths);
    InequalityReport rep;
    rep.n = st.n;
    rep.lhs = st.mean;
    rep.rhs = rhs;
    rep.rel_se = st.mean > 0.0 ? st.std_error / st.mean : 0.0;
    rep.pass = rep.lhs <= rhs * (1.0 + 3.0 * rep.rel_se);
    rep.margin = rhs * (1.0 + 3.0 * rep.rel_se) - rep.lhs;
    return rep;
}

} // namespace detail

// E sup^p <= (1/(1-p)) (E H_T)^p exp(p/(1-p) A_T)
inline InequalityReport gronwall_check(const GronwallInstance& inst) {
    detail::validate_instance(inst);
    if (inst.eta.kind != EtaSpec::Kind::linear)
        throw std::invalid_argument("gronwall_check: requires the linear growth case");
    std::vector<double> lhs(inst.sup_x.size());
    for (std::size_t i = 0; i < lhs.size(); ++i) lhs[i] = std::pow(inst.sup_x[i], inst.p);
    double eh = mean_stats(inst.h_T).mean;
    double rhs = std::pow(eh, inst.p) * std::exp(inst.p / (1.0 - inst.p) * inst.a_T) /
                 (1.0 - inst.p);
    return detail::finish_report(std::move(lhs), rhs);
}

// G pair for eta(x) = x |log x| on (1, inf)
inline double bihari_G(double x, double r) {
    if (!(x > 1.0) || !(r > 1.0)) throw std::invalid_argument("bihari_G: arguments must exceed 1");
    return std::log(std::log(x)) - std::log(std::log(r));
}

inline double bihari_Ginv(double w, double r) {
    if (!(r > 1.0)) throw std::invalid_argument("bihari_Ginv: r must exceed 1");
    return std::exp(std::log(r) * std::exp(w));
}

// E [ G^{-1}(G(sup) - A_T/(1-p))^p ] <= (1/(1-p)) (E H_T)^p, evaluated
// per path through the exact identity G^{-1}(G(y) - c) = y^{exp(-c)}.
inline InequalityReport bihari_check(const GronwallInstance& inst) {
    detail::validate_instance(inst);
    if (inst.eta.kind != EtaSpec::Kind::xlogx)
        throw std::invalid_argument("bihari_check: requires the x|log x| growth case");
    if (!(inst.eta.r > 1.0)) throw std::invalid_argument("bihari_check: floor r must exceed 1");
    for (double v : inst.sup_x)
        if (v <= inst.eta.r)
            throw std::invalid_argument("bihari_check: process sup at or below the floor r");
    const double shrink = std::exp(-inst.a_T / (1.0 - inst.p));
    std::vector<double> lhs(inst.sup_x.size());
    for (std::size_t i = 0; i < lhs.size(); ++i) lhs[i] = std::pow(inst.sup_x[i], inst.p * shrink);
    double eh = mean_stats(inst.h_T).mean;
    double rhs = std::pow(eh, inst.p) / (1.0 - inst.p);
    return detail::finish_report(std::move(lhs), rhs);
}

// ------------------------------------------------- forward-run builders --

// X := |X|, H_t := |x0| + K_b t + running sup of the martingale part,
// A_t := L_b t. The scheme's martingale sup is recorded during stepping.
inline GronwallInstance gronwall_from_forward(const ForwardModel& model, const EulerResult& res,
                                              const TimeGrid& grid, double p) {
    if (res.paths.empty() || res.mart_sup.size() != res.paths.size())
        throw std::invalid_argument("gronwall_from_forward: incomplete forward result");
    GronwallInstance inst;
    inst.eta.kind = EtaSpec::Kind::linear;
    inst.p = p;
    inst.a_T = model.L_b * grid.T;
    inst.sup_x.resize(res.paths.size());
    inst.h_T.resize(res.paths.size());
    for (std::size_t q = 0; q < res.paths.size(); ++q) {
        inst.sup_x[q] = sup_norm(res.paths[q]);
        inst.h_T[q] = std::fabs(model.x0) + model.K_b * grid.T + res.mart_sup[q];
    }
    return inst;
}

// Growth rate of exp(c X): drift, diffusion and compensated-jump terms of
// the exponential, against the x log x majorant for the drift's sup-norm
// coupling. Valid for c > 0 and x0 >= 0.
inline double exponential_growth_rate(const ForwardModel& model, const JumpMeasure& measure,
                                      double c) {
    double jumps = 0.0;
    for (std::size_t j = 0; j < measure.atoms.size(); ++j) {
        double k = model.rho.kappa(j, measure.atoms[j].mark);
        jumps += (std::exp(c * k) - 1.0 - c * k) * measure.atoms[j].intensity;
    }
    double direct = c * model.K_b + 0.5 * c * c * model.K_sigma * model.K_sigma + jumps;
    return std::max(direct, c * model.L_b);
}

// X := exp(c X) + 2 >= 2, floored into the x|log x| domain as in the
// exponential-moment argument: A_t := 2 K t, H == 2 + exp(c x0).
inline GronwallInstance bihari_from_forward(const ForwardModel& model, const JumpMeasure& measure,
                                            const EulerResult& res, const TimeGrid& grid, double c,
                                            double p) {
    if (!(c > 0.0)) throw std::invalid_argument("bihari_from_forward: c must be positive");
    if (res.paths.empty()) throw std::invalid_argument("bihari_from_forward: no paths");
    GronwallInstance inst;
    inst.eta.kind = EtaSpec::Kind::xlogx;
    inst.p = p;
    inst.a_T = 2.0 * exponential_growth_rate(model, measure, c) * grid.T;
    inst.sup_x.resize(res.paths.size());
    inst.h_T.assign(res.paths.size(), 2.0 + std::exp(c * model.x0));
    for (std::size_t q = 0; q < res.paths.size(); ++q) {
        // signed running max of X, pre-jump values included
        const PathSkeleton& sk = res.paths[q];
        double mx = sk.values.empty() ? 0.0 : sk.values[0];
        std::size_t ji = 0;
        for (std::size_t k = 0; k < sk.values.size(); ++k) {
            double jtot = 0.0;
            while (ji < sk.jumps.size() && sk.jumps[ji].time <= (*sk.times)[k])
                jtot += sk.jumps[ji++].size;
            if (jtot != 0.0) mx = std::max(mx, sk.values[k] - jtot);
            mx = std::max(mx, sk.values[k]);
        }
        inst.sup_x[q] = std::exp(c * mx) + 2.0;
    }
    return inst;
}

// ------------------------------------------------ fixed point and decay --

struct FixedPointProblem {
    double C = 0.0;       // iteration constant, >= 0
    double exponent = 0.0; // r*ell, in [0, 1)
    double a0 = 1.0;
    double tol = 1e-10;
    std::size_t max_iter = 1000;
};

struct FixedPointResult {
    double value = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0; // |map(value) - value|
    bool converged = false;
};

// a <- (C+1)^2 (1 + a^exponent), contractive on [1, inf) for exponent < 1
inline FixedPointResult fixed_point(const FixedPointProblem& pr) {
    if (!(pr.C >= 0.0)) throw std::invalid_argument("fixed_point: C must be nonnegative");
    if (!(pr.exponent >= 0.0 && pr.exponent < 1.0))
        throw std::invalid_argument("fixed_point: exponent must lie in [0,1)");
    if (!(pr.a0 >= 1.0)) throw std::invalid_argument("fixed_point: start must be >= 1");
    if (!(pr.tol > 0.0)) throw std::invalid_argument("fixed_point: tol must be positive");
    const double s = (pr.C + 1.0) * (pr.C + 1.0);
    double a = pr.a0;
    FixedPointResult out;
    for (std::size_t it = 1; it <= pr.max_iter; ++it) {
        double next = s * (1.0 + std::pow(a, pr.exponent));
        out.iterations = it;
        if (std::fabs(next - a) <= pr.tol) {
            out.value = next;
            out.residual = std::fabs(s * (1.0 + std::pow(next, pr.exponent)) - next);
            out.converged = true;
            return out;
        }
        a = next;
    }
    // the map is a contraction here, so running out of iterations means
    // the caller passed a hostile tolerance
    throw std::runtime_error("fixed_point: iteration did not reach tol within max_iter");
}

// C e^{Cn} (dxi2 + df2) + e^{-n} C expX
inline double apriori_rhs(long n, double C, double dxi2, double df2, double expX) {
    if (!(C >= 0.0 && dxi2 >= 0.0 && df2 >= 0.0 && expX >= 0.0))
        throw std::invalid_argument("apriori_rhs: inputs must be nonnegative");
    double dn = static_cast<double>(n);
    return C * std::exp(C * dn) * (dxi2 + df2) + std::exp(-dn) * C * expX;
}

// smallest minimizer over the integer range [n_min, n_max]
inline long apriori_minimize(double C, double dxi2, double df2, double expX, long n_min,
                             long n_max) {
    if (n_min > n_max) throw std::invalid_argument("apriori_minimize: empty range");
    long best = n_min;
    double best_v = apriori_rhs(n_min, C, dxi2, df2, expX);
    for (long n = n_min + 1; n <= n_max; ++n) {
        double v = apriori_rhs(n, C, dxi2, df2, expX);
        if (v < best_v) {
            best_v = v;
            best = n;
        }
    }
    return best;
}

} // namespace fbsde
