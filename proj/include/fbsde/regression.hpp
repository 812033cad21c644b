#pragma once

// Least squares on a small fixed feature set via normal equations.
// Cholesky with a ridge fallback on rank deficiency; condition numbers
// from a Jacobi eigenvalue sweep of the Gram matrix. Matrices here are
// at most 8x8, so hand-rolled dense routines beat pulling in a library.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

struct RegressionBasis {
    enum class Feature { one, x, x2, run_sup, run_int };
    std::vector<Feature> features;

    static RegressionBasis defaults() {
        return RegressionBasis{{Feature::one, Feature::x, Feature::x2, Feature::run_sup, Feature::run_int}};
    }
    std::size_t size() const { return features.size(); }
};

inline std::string feature_name(RegressionBasis::Feature f) {
    switch (f) {
        case RegressionBasis::Feature::one: return "one";
        case RegressionBasis::Feature::x: return "x";
        case RegressionBasis::Feature::x2: return "x2";
        case RegressionBasis::Feature::run_sup: return "run_sup";
        case RegressionBasis::Feature::run_int: return "run_int";
    }
    return "?";
}

inline RegressionBasis::Feature feature_from_name(const std::string& s) {
    if (s == "one") return RegressionBasis::Feature::one;
    if (s == "x") return RegressionBasis::Feature::x;
    if (s == "x2") return RegressionBasis::Feature::x2;
    if (s == "run_sup") return RegressionBasis::Feature::run_sup;
    if (s == "run_int") return RegressionBasis::Feature::run_int;
    throw std::invalid_argument("unknown basis feature '" + s + "'");
}

namespace detail {

// eigenvalues of a symmetric p x p matrix by cyclic Jacobi rotations
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t p) {
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j)
                (i == j ? diag : off) += std::fabs(a[i * p + j]);
        if (off <= 1e-15 * (diag + 1e-300)) break;
        for (std::size_t i = 0; i + 1 < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j) {
                double apq = a[i * p + j];
                if (apq == 0.0) continue;
                double app = a[i * p + i], aqq = a[j * p + j];
                double theta = 0.5 * (aqq - app) / apq;
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < p; ++k) {
                    double aik = a[i * p + k], ajk = a[j * p + k];
                    a[i * p + k] = c * aik - s * ajk;
                    a[j * p + k] = s * aik + c * ajk;
                }
                for (std::size_t k = 0; k < p; ++k) {
                    double aki = a[k * p + i], akj = a[k * p + j];
                    a[k * p + i] = c * aki - s * akj;
                    a[k * p + j] = s * aki + c * akj;
                }
            }
    }
    std::vector<double> ev(p);
    for (std::size_t i = 0; i < p; ++i) ev[i] = a[i * p + i];
    return ev;
}

inline bool cholesky_factor(std::vector<double>& a, std::size_t p) {
    // lower factor stored in place
    for (std::size_t j = 0; j < p; ++j) {
        double d = a[j * p + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * p + k] * a[j * p + k];
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        double lj = std::sqrt(d);
        a[j * p + j] = lj;
        for (std::size_t i = j + 1; i < p; ++i) {
            double s = a[i * p + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * p + k] * a[j * p + k];
            a[i * p + j] = s / lj;
        }
    }
    return true;
}

inline void cholesky_solve(const std::vector<double>& l, std::size_t p, std::vector<double>& b) {
    for (std::size_t i = 0; i < p; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i * p + k] * b[k];
        b[i] = s / l[i * p + i];
    }
    for (std::size_t ii = p; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < p; ++k) s -= l[k * p + ii] * b[k];
        b[ii] = s / l[ii * p + ii];
    }
}

} // namespace detail

// One factored normal-equation system; solve() may be called repeatedly
// with different right-hand sides (each backward step reuses its factor
// for the continuation, the Z target and every U target).
class NormalEquations {
  public:
    // gram is row-major p x p, consumed by value
    NormalEquations(std::vector<double> gram, std::size_t p, double ridge_scale = 1e-8) : p_(p) {
        if (gram.size() != p * p) throw std::invalid_argument("NormalEquations: bad gram size");
        auto ev = detail::jacobi_eigenvalues(gram, p);
        double lmax = 0.0, lmin = HUGE_VAL;
        for (double e : ev) {
            lmax = std::max(lmax, e);
            lmin = std::min(lmin, e);
        }
        condition_ = lmin > 0.0 ? lmax / lmin : HUGE_VAL;
        factor_ = gram;
        ridged_ = false;
        if (condition_ > 1e12 || !detail::cholesky_factor(factor_, p)) {
            double trace = 0.0;
            for (std::size_t i = 0; i < p; ++i) trace += gram[i * p + i];
            double lambda = ridge_scale * trace / static_cast<double>(p);
            if (!(lambda > 0.0)) lambda = ridge_scale;
            factor_ = gram;
            for (std::size_t i = 0; i < p; ++i) factor_[i * p + i] += lambda;
            ridged_ = true;
            if (!detail::cholesky_factor(factor_, p))
                throw std::runtime_error("NormalEquations: Gram matrix not factorable even with ridge");
        }
    }

    std::vector<double> solve(std::vector<double> rhs) const {
        if (rhs.size() != p_) throw std::invalid_argument("NormalEquations::solve: bad rhs size");
        detail::cholesky_solve(factor_, p_, rhs);
        return rhs;
    }

    double condition() const { return condition_; }
    bool ridged() const { return ridged_; }

  private:
    std::size_t p_;
    std::vector<double> factor_;
    double condition_ = 0.0;
    bool ridged_ = false;
};

} // namespace fbsde
