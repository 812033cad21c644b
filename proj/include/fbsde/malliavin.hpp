#pragma once

// Jump-direction derivatives by path shifting and a Gaussian-direction
// sensitivity probe built on coupled Brownian fields.
//
// The jump derivative of a path functional at (t, v) is the plain
// difference F(x + mark 1_{[t,T]}) - F(x), the shift entering the ledger
// as a jump at t. For the solution fields the same shift is pushed
// through the forward scheme on identical noise and the backward pass is
// rerun; fields dated before the shift are zero by adaptedness, so the
// raw re-solve differences there are discarded rather than reported.

#include "fbsde/forward.hpp"
#include "fbsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fbsde {

// x + mark * 1_{[t, T]} as a skeleton: one new ledger entry at t, values
// from t on shifted, the instant t inserted if the grid lacks it.
inline PathSkeleton shift_path(const PathSkeleton& x, double t, double mark) {
    const double T = x.horizon();
    if (!(t >= 0.0 && t <= T)) throw std::invalid_argument("shift_path: shift time outside [0, T]");
    const auto& ts = *x.times;
    std::vector<double> times(ts);
    if (!std::binary_search(times.begin(), times.end(), t))
        times.insert(std::lower_bound(times.begin(), times.end(), t), t);
    std::vector<double> values(times.size());
    for (std::size_t k = 0; k < times.size(); ++k)
        values[k] = value_at(x, times[k]) + (times[k] >= t ? mark : 0.0);
    std::vector<Jump> jumps(x.jumps);
    auto pos = std::upper_bound(jumps.begin(), jumps.end(), t,
                                [](double tt, const Jump& j) { return tt < j.time; });
    jumps.insert(pos, Jump{t, mark});
    return make_skeleton(std::move(times), std::move(values), std::move(jumps));
}

inline double jump_derivative_functional(const PathFunctional& f, const PathSkeleton& x, double t,
                                         double mark) {
    return evaluate_functional(f, shift_path(x, t, mark)) - evaluate_functional(f, x);
}

// ------------------------------------------- solution field derivatives --

struct SolutionDerivative {
    double s = 0.0;    // shift instant (a base grid instant)
    std::size_t atom = 0;
    double mark = 0.0; // jump mark of the atom, for reference
    std::vector<double> t;
    // differences shifted - base, zero-filled strictly before s
    std::vector<std::vector<double>> dX; // at base instants
    std::vector<std::vector<double>> dY;
    std::vector<std::vector<double>> dZ;
    std::vector<std::vector<std::vector<double>>> dU;
    std::vector<std::vector<double>> dH;
    BsdeSolution base;
    BsdeSolution shifted;
};

inline SolutionDerivative solution_jump_derivative(const ForwardModel& model,
                                                   const DriverSpec& driver, double M,
                                                   const NoiseBundle& bundle, double s,
                                                   std::size_t atom,
                                                   const SolverOptions& opts = {}) {
    if (atom >= bundle.measure.atoms.size())
        throw std::invalid_argument("solution_jump_derivative: atom index out of range");
    EulerOptions eopts;
    eopts.threads = opts.threads;
    EulerResult base = euler_solve(model, bundle, eopts);
    EulerResult shifted = shifted_solve(model, bundle, s, atom, eopts);

    SolutionDerivative out;
    out.s = s;
    out.atom = atom;
    out.mark = bundle.measure.atoms[atom].mark;
    out.base = lsmc_solve(base.paths, bundle, driver, M, opts);
    out.shifted = lsmc_solve(shifted.paths, bundle, driver, M, opts);
    out.t = out.base.t;

    const std::size_t N = out.t.size() - 1;
    const std::size_t n = bundle.paths.size();
    const std::size_t na = bundle.measure.atoms.size();
    out.dX.assign(N + 1, std::vector<double>(n, 0.0));
    out.dY.assign(N + 1, std::vector<double>(n, 0.0));
    out.dZ.assign(N, std::vector<double>(n, 0.0));
    out.dU.assign(na, std::vector<std::vector<double>>(N, std::vector<double>(n, 0.0)));
    out.dH.assign(N, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i <= N; ++i) {
        if (out.t[i] < s) continue; // adapted fields cannot see the shift yet
        for (std::size_t q = 0; q < n; ++q) {
            const auto& bi = bundle.paths[q].base_index;
            out.dX[i][q] = shifted.paths[q].values[bi[i]] - base.paths[q].values[bi[i]];
            out.dY[i][q] = out.shifted.Y[i][q] - out.base.Y[i][q];
            if (i < N) {
                out.dZ[i][q] = out.shifted.Z[i][q] - out.base.Z[i][q];
                out.dH[i][q] = out.shifted.H[i][q] - out.base.H[i][q];
                for (std::size_t j = 0; j < na; ++j)
                    out.dU[j][i][q] = out.shifted.U[j][i][q] - out.base.U[j][i][q];
            }
        }
    }
    return out;
}

// ------------------------------------------ Gaussian-direction quotient --

inline std::vector<double> evaluate_on_paths(const PathFunctional& f,
                                             const std::vector<PathSkeleton>& paths) {
    std::vector<double> v(paths.size());
    for (std::size_t p = 0; p < paths.size(); ++p) v[p] = evaluate_functional(f, paths[p]);
    return v;
}

struct QuotientStat {
    double phi = 0.0;
    double value = 0.0;     // sqrt(E (F_phi - F)^2) / phi
    double std_error = 0.0; // delta-method error of the square root
    std::size_t n = 0;
};

inline QuotientStat gaussian_quotient(const std::vector<double>& base,
                                      const std::vector<double>& mixed, double phi) {
    if (base.size() != mixed.size() || base.empty())
        throw std::invalid_argument("gaussian_quotient: samples must align and be nonempty");
    if (!(phi > 0.0 && phi <= 1.0))
        throw std::invalid_argument("gaussian_quotient: phi must lie in (0, 1]");
    std::vector<double> d2(base.size());
    for (std::size_t p = 0; p < base.size(); ++p) {
        double d = mixed[p] - base[p];
        d2[p] = d * d;
    }
    MeanStats st = mean_stats(d2);
    QuotientStat q;
    q.phi = phi;
    q.n = base.size();
    if (st.mean > 0.0) {
        q.value = std::sqrt(st.mean) / phi;
        q.std_error = st.std_error / (2.0 * std::sqrt(st.mean) * phi);
    }
    return q;
}

// For F in the first Gaussian chaos with unit kernel norm the quotient is
// exactly sqrt(2 (1 - sqrt(1 - phi^2))) / phi, decreasing to 1 as phi -> 0.
inline double first_chaos_quotient(double phi) {
    if (!(phi > 0.0 && phi <= 1.0))
        throw std::invalid_argument("first_chaos_quotient: phi must lie in (0, 1]");
    return std::sqrt(2.0 * (1.0 - std::sqrt(1.0 - phi * phi))) / phi;
}

// One coupled bundle, one base run, one mixed run per phi. Reusing the
// same bundle across the phi grid is what makes the curve monotone at
// modest path counts: differences share the base field noise.
inline std::vector<QuotientStat> quotient_curve(const ForwardModel& model, const PathFunctional& f,
                                                const TimeGrid& grid, const JumpMeasure& measure,
                                                std::size_t n_paths, std::uint64_t seed,
                                                const std::vector<double>& phis, int threads = 1) {
    for (double phi : phis)
        if (!(phi > 0.0 && phi <= 1.0))
            throw std::invalid_argument("quotient_curve: phi values must lie in (0, 1]");
    NoiseBundle bundle = sample_noise(grid, measure, n_paths, seed, true, threads);
    EulerOptions eopts;
    eopts.threads = threads;
    EulerResult base = euler_solve(model, bundle, eopts);
    std::vector<double> v0 = evaluate_on_paths(f, base.paths);
    std::vector<QuotientStat> out;
    out.reserve(phis.size());
    for (double phi : phis) {
        EulerOptions mopts;
        mopts.phi = phi;
        mopts.threads = threads;
        EulerResult mixed = euler_solve(model, bundle, mopts);
        out.push_back(gaussian_quotient(v0, evaluate_on_paths(f, mixed.paths), phi));
    }
    return out;
}

} // namespace fbsde
