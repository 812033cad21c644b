#pragma once

// Backward solvers for the localized equation on a sampled path bundle.
//
// lsmc_solve runs one backward pass: at each step the continuation value
// is regressed on path features, the martingale coefficients Z and U come
// from regressing the centered one-step increment against the Brownian and
// compensated jump increments (centering by the fitted continuation is a
// control variate; without it the coefficient noise scales like 1/dt),
// and the value is updated through the truncated driver. picard_solve
// repeats the pass feeding the driver the previous sweep's fields, which
// is the fixed-point iteration the a-priori bounds are stated for.

#include "fbsde/forward.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/regression.hpp"
#include "fbsde/stats.hpp"
#include "fbsde/truncation.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fbsde {

inline constexpr std::size_t kMaxFeatures = 8;

// constants entering the truncation-level rule M = 1 + q-quantile of
// max(c_y (1 + s^{r+1}), a + b s^r, s) over (instant, path) running sups
struct BoundConstants {
    double a = 1.0;
    double b = 1.0;
    double c_y = 1.0;
};

struct SolverOptions {
    RegressionBasis basis = RegressionBasis::defaults();
    double ridge_scale = 1e-8;
    int threads = 1;
};

struct PicardOptions {
    double tol = 1e-8;
    std::size_t max_sweeps = 25;
};

struct BsdeSolution {
    std::vector<double> t;  // base instants, size N+1
    double M_used = 0.0;
    // fields indexed [instant][path]; Y and sup_x have N+1 rows, the
    // integrand fields Z, U, H live on the N left endpoints
    std::vector<std::vector<double>> Y;
    std::vector<std::vector<double>> Z;
    std::vector<std::vector<std::vector<double>>> U; // per atom
    std::vector<std::vector<double>> H;
    std::vector<std::vector<double>> sup_x; // running sup of |X| at base instants
    std::vector<std::vector<double>> path_term; // driver path term, kept when the driver uses one
    double y0 = 0.0;

    std::vector<double> condition_by_step;
    double max_condition = 0.0;
    std::size_t ridge_events = 0;

    bool picard_converged = false;
    std::size_t picard_iterations = 0;
    std::vector<double> picard_residuals;
};

namespace detail {

// per-bundle quantities the backward pass consumes over and over
struct SolverWorkspace {
    std::size_t n_steps = 0;
    std::size_t n_paths = 0;
    std::size_t n_atoms = 0;
    double T = 0.0;
    std::vector<double> t;  // base instants
    std::vector<double> dt; // base interval widths
    std::vector<std::vector<double>> x;       // value at base instants
    std::vector<std::vector<double>> run_sup; // sup of |X| over [0, t_i], left limits included
    std::vector<std::vector<double>> run_int; // integral of X over [0, t_i]
    std::vector<std::vector<double>> dw;      // Brownian increment per base interval
    std::vector<std::vector<std::vector<double>>> dn; // compensated jump count, per atom
    std::vector<double> g_of_path;            // truncated terminal value
    bool has_path_term = false;
    std::vector<std::vector<double>> path_term; // truncated driver path term at base instants
};

inline SolverWorkspace build_workspace(const std::vector<PathSkeleton>& paths,
                                       const NoiseBundle& bundle, const TruncatedData& trunc,
                                       int threads) {
    if (paths.empty() || paths.size() != bundle.paths.size())
        throw std::invalid_argument("build_workspace: paths and noise bundle must align");
    const DriverSpec& d = *trunc.driver;
    const auto& bt = bundle.grid.times;
    const std::size_t N = bt.size() - 1;
    const std::size_t n = paths.size();
    const std::size_t na = bundle.measure.atoms.size();

    SolverWorkspace ws;
    ws.n_steps = N;
    ws.n_paths = n;
    ws.n_atoms = na;
    ws.T = bundle.grid.T;
    ws.t = bt;
    ws.dt.resize(N);
    for (std::size_t i = 0; i < N; ++i) ws.dt[i] = bt[i + 1] - bt[i];
    ws.x.assign(N + 1, std::vector<double>(n));
    ws.run_sup.assign(N + 1, std::vector<double>(n));
    ws.run_int.assign(N + 1, std::vector<double>(n));
    ws.dw.assign(N, std::vector<double>(n));
    ws.dn.assign(na, std::vector<std::vector<double>>(N, std::vector<double>(n)));
    ws.g_of_path.resize(n);
    ws.has_path_term = d.uses_path_term();
    if (ws.has_path_term) ws.path_term.assign(N + 1, std::vector<double>(n));

    const double M = trunc.M;
    for_each_chunk(n, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p) {
            const PathSkeleton& sk = paths[p];
            const PathNoise& pn = bundle.paths[p];
            const auto& rt = *sk.times;
            if (pn.times->size() != rt.size())
                throw std::invalid_argument("build_workspace: skeleton not built on this bundle");

            StoppedEvaluator scan(d.path_functional, ws.T);
            double integral = 0.0, sup = 0.0;
            std::size_t ji = 0, bi = 0;
            for (std::size_t k = 0; k < rt.size(); ++k) {
                const double tk = rt[k];
                if (k > 0) integral += sk.values[k - 1] * (tk - rt[k - 1]);
                const double post = sk.values[k];
                double jtot = 0.0;
                while (ji < sk.jumps.size() && sk.jumps[ji].time <= tk) jtot += sk.jumps[ji++].size;
                const double pre = post - jtot;
                if (jtot != 0.0) sup = std::max(sup, std::fabs(pre));
                sup = std::max(sup, std::fabs(post));
                if (ws.has_path_term) {
                    const double tpre = smooth_truncate(pre, M);
                    const double tpost = smooth_truncate(post, M);
                    if (k == 0)
                        scan.reset(tpre, tpost);
                    else
                        scan.push(tk, tpre, tpost, tpost - tpre);
                }
                if (bi < pn.base_index.size() && pn.base_index[bi] == k) {
                    ws.x[bi][p] = post;
                    ws.run_sup[bi][p] = sup;
                    ws.run_int[bi][p] = integral;
                    if (ws.has_path_term) ws.path_term[bi][p] = scan.value();
                    ++bi;
                }
            }
            if (bi != N + 1)
                throw std::invalid_argument("build_workspace: refined grid lost base instants");

            // Brownian increments summed back onto base intervals
            for (std::size_t i = 0; i < N; ++i) {
                double s = 0.0;
                for (std::size_t k = pn.base_index[i]; k < pn.base_index[i + 1]; ++k) s += pn.dw[k];
                ws.dw[i][p] = s;
            }

            // compensated jump counts per atom and base interval
            for (std::size_t j = 0; j < na; ++j)
                for (std::size_t i = 0; i < N; ++i)
                    ws.dn[j][i][p] = -bundle.measure.atoms[j].intensity * ws.dt[i];
            for (const auto& ev : pn.jumps) {
                auto it = std::lower_bound(bt.begin(), bt.end(), ev.time);
                std::size_t i = static_cast<std::size_t>(it - bt.begin());
                if (i == 0 || i > N) throw std::logic_error("build_workspace: jump time off the grid");
                ws.dn[ev.atom][i - 1][p] += 1.0;
            }

            ws.g_of_path[p] = trunc.g_value(sk);
        }
    });
    return ws;
}

inline void fill_features(const SolverWorkspace& ws, const RegressionBasis& basis, std::size_t i,
                          std::size_t p, double* phi) {
    for (std::size_t f = 0; f < basis.features.size(); ++f) {
        switch (basis.features[f]) {
            case RegressionBasis::Feature::one: phi[f] = 1.0; break;
            case RegressionBasis::Feature::x: phi[f] = ws.x[i][p]; break;
            case RegressionBasis::Feature::x2: phi[f] = ws.x[i][p] * ws.x[i][p]; break;
            case RegressionBasis::Feature::run_sup: phi[f] = ws.run_sup[i][p]; break;
            case RegressionBasis::Feature::run_int: phi[f] = ws.run_int[i][p]; break;
        }
    }
}

// Gram and right-hand-side sums are accumulated per fixed-size path chunk
// and reduced in chunk order, so totals do not depend on the thread count.
inline std::vector<double> step_gram(const SolverWorkspace& ws, const RegressionBasis& basis,
                                     std::size_t i, int threads) {
    const std::size_t p = basis.size();
    std::vector<std::vector<double>> part(chunk_count(ws.n_paths), std::vector<double>(p * p, 0.0));
    for_each_chunk(ws.n_paths, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
        double phi[kMaxFeatures];
        auto& g = part[c];
        for (std::size_t q = b; q < e; ++q) {
            fill_features(ws, basis, i, q, phi);
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t s = r; s < p; ++s) g[r * p + s] += phi[r] * phi[s];
        }
    });
    std::vector<double> gram(p * p, 0.0);
    for (const auto& g : part)
        for (std::size_t k = 0; k < p * p; ++k) gram[k] += g[k];
    for (std::size_t r = 0; r < p; ++r)
        for (std::size_t s = 0; s < r; ++s) gram[r * p + s] = gram[s * p + r];
    return gram;
}

template <class TargetFn>
inline std::vector<double> step_rhs(const SolverWorkspace& ws, const RegressionBasis& basis,
                                    std::size_t i, int threads, TargetFn&& target) {
    const std::size_t p = basis.size();
    std::vector<std::vector<double>> part(chunk_count(ws.n_paths), std::vector<double>(p, 0.0));
    for_each_chunk(ws.n_paths, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
        double phi[kMaxFeatures];
        auto& r = part[c];
        for (std::size_t q = b; q < e; ++q) {
            fill_features(ws, basis, i, q, phi);
            const double y = target(q);
            for (std::size_t f = 0; f < p; ++f) r[f] += phi[f] * y;
        }
    });
    std::vector<double> rhs(p, 0.0);
    for (const auto& r : part)
        for (std::size_t f = 0; f < p; ++f) rhs[f] += r[f];
    return rhs;
}

inline void predict_row(const SolverWorkspace& ws, const RegressionBasis& basis, std::size_t i,
                        const std::vector<double>& beta, std::vector<double>& out, int threads) {
    for_each_chunk(ws.n_paths, threads, [&](std::size_t, std::size_t b, std::size_t e) {
        double phi[kMaxFeatures];
        for (std::size_t q = b; q < e; ++q) {
            fill_features(ws, basis, i, q, phi);
            double v = 0.0;
            for (std::size_t f = 0; f < basis.size(); ++f) v += beta[f] * phi[f];
            out[q] = v;
        }
    });
}

inline std::vector<NormalEquations> step_factors(const SolverWorkspace& ws,
                                                 const RegressionBasis& basis,
                                                 const SolverOptions& opts, BsdeSolution& sol) {
    std::vector<NormalEquations> eqs;
    eqs.reserve(ws.n_steps);
    for (std::size_t i = 0; i < ws.n_steps; ++i) {
        eqs.emplace_back(step_gram(ws, basis, i, opts.threads), basis.size(), opts.ridge_scale);
        sol.condition_by_step.push_back(eqs.back().condition());
        sol.max_condition = std::max(sol.max_condition, eqs.back().condition());
        if (eqs.back().ridged()) ++sol.ridge_events;
    }
    return eqs;
}

// One full backward pass. With prev_* null the driver is fed the freshly
// regressed fields (plain least-squares scheme); with them set it is fed
// the previous sweep's fields (Picard scheme).
inline void backward_sweep(const SolverWorkspace& ws, const RegressionBasis& basis,
                           const std::vector<NormalEquations>& eqs, const TruncatedData& trunc,
                           const JumpMeasure& measure, int threads,
                           const std::vector<std::vector<double>>* prev_y,
                           const std::vector<std::vector<double>>* prev_z,
                           const std::vector<std::vector<double>>* prev_h, BsdeSolution& sol) {
    const DriverSpec& d = *trunc.driver;
    const std::size_t N = ws.n_steps, n = ws.n_paths, na = ws.n_atoms;
    sol.Y[N] = ws.g_of_path;
    std::vector<double> proxy(n), resid(n);
    for (std::size_t i = N; i-- > 0;) {
        const double ti = ws.t[i];
        const double dti = ws.dt[i];
        const auto& eq = eqs[i];
        const auto& ynext = sol.Y[i + 1];

        auto beta_y = eq.solve(step_rhs(ws, basis, i, threads, [&](std::size_t q) { return ynext[q]; }));
        predict_row(ws, basis, i, beta_y, proxy, threads);
        for_each_chunk(n, threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t q = b; q < e; ++q) resid[q] = ynext[q] - proxy[q];
        });

        const auto& dwrow = ws.dw[i];
        auto beta_z = eq.solve(step_rhs(ws, basis, i, threads,
                                        [&](std::size_t q) { return resid[q] * dwrow[q] / dti; }));
        predict_row(ws, basis, i, beta_z, sol.Z[i], threads);

        for (std::size_t j = 0; j < na; ++j) {
            const double lam = measure.atoms[j].intensity;
            const auto& dnrow = ws.dn[j][i];
            auto beta_u = eq.solve(step_rhs(ws, basis, i, threads, [&](std::size_t q) {
                return resid[q] * dnrow[q] / (lam * dti);
            }));
            predict_row(ws, basis, i, beta_u, sol.U[j][i], threads);
        }

        for_each_chunk(n, threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t q = b; q < e; ++q) {
                // same finite sum as h_integral, inlined to avoid building
                // a per-path vector of U values
                double hsum = 0.0;
                for (std::size_t j = 0; j < na; ++j) {
                    const double u = smooth_truncate(sol.U[j][i][q], trunc.M);
                    hsum += d.h.value(ti, u) * jump_weight(measure.atoms[j].mark) *
                            measure.atoms[j].intensity;
                }
                sol.H[i][q] = hsum;
                const double ya = prev_y ? (*prev_y)[i][q] : proxy[q];
                const double za = prev_z ? (*prev_z)[i][q] : sol.Z[i][q];
                const double ha = prev_h ? (*prev_h)[i][q] : hsum;
                const double pt = ws.has_path_term ? ws.path_term[i][q] : 0.0;
                sol.Y[i][q] = proxy[q] + dti * trunc.f_value(ti, pt, ya, za, ha);
            }
        });
    }
    double s = 0.0;
    for (double v : sol.Y[0]) s += v;
    sol.y0 = s / static_cast<double>(n);
}

inline BsdeSolution empty_solution(const SolverWorkspace& ws, double M) {
    BsdeSolution sol;
    sol.t = ws.t;
    sol.M_used = M;
    sol.Y.assign(ws.n_steps + 1, std::vector<double>(ws.n_paths, 0.0));
    sol.Z.assign(ws.n_steps, std::vector<double>(ws.n_paths, 0.0));
    sol.U.assign(ws.n_atoms,
                 std::vector<std::vector<double>>(ws.n_steps, std::vector<double>(ws.n_paths, 0.0)));
    sol.H.assign(ws.n_steps, std::vector<double>(ws.n_paths, 0.0));
    sol.sup_x = ws.run_sup;
    if (ws.has_path_term) sol.path_term = ws.path_term;
    return sol;
}

inline void check_solver_inputs(const RegressionBasis& basis) {
    if (basis.size() == 0 || basis.size() > kMaxFeatures)
        throw std::invalid_argument("solver: basis must have between 1 and 8 features");
}

} // namespace detail

inline BsdeSolution lsmc_solve(const std::vector<PathSkeleton>& paths, const NoiseBundle& bundle,
                               const DriverSpec& driver, double M,
                               const SolverOptions& opts = {}) {
    detail::check_solver_inputs(opts.basis);
    TruncatedData trunc = truncated_data(driver, M);
    auto ws = detail::build_workspace(paths, bundle, trunc, opts.threads);
    BsdeSolution sol = detail::empty_solution(ws, M);
    auto eqs = detail::step_factors(ws, opts.basis, opts, sol);
    detail::backward_sweep(ws, opts.basis, eqs, trunc, bundle.measure, opts.threads, nullptr,
                           nullptr, nullptr, sol);
    return sol;
}

inline BsdeSolution picard_solve(const std::vector<PathSkeleton>& paths, const NoiseBundle& bundle,
                                 const DriverSpec& driver, double M, const SolverOptions& opts = {},
                                 const PicardOptions& popts = {}) {
    detail::check_solver_inputs(opts.basis);
    if (popts.max_sweeps < 2) throw std::invalid_argument("picard_solve: need at least two sweeps");
    TruncatedData trunc = truncated_data(driver, M);
    auto ws = detail::build_workspace(paths, bundle, trunc, opts.threads);
    BsdeSolution sol = detail::empty_solution(ws, M);
    auto eqs = detail::step_factors(ws, opts.basis, opts, sol);

    const std::size_t N = ws.n_steps, n = ws.n_paths;
    std::vector<std::vector<double>> prev_y(N + 1, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> prev_z(N, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> prev_h(N, std::vector<double>(n, 0.0));

    std::size_t sweeps = 0;
    for (std::size_t sweep = 1; sweep <= popts.max_sweeps; ++sweep) {
        detail::backward_sweep(ws, opts.basis, eqs, trunc, bundle.measure, opts.threads, &prev_y,
                               &prev_z, &prev_h, sol);
        ++sweeps;
        if (sweep >= 2) {
            // residual between consecutive sweeps: root mean over paths of
            // the squared largest per-instant change in Y
            double acc = 0.0;
            for (std::size_t q = 0; q < n; ++q) {
                double worst = 0.0;
                for (std::size_t i = 0; i <= N; ++i) {
                    double dv = sol.Y[i][q] - prev_y[i][q];
                    worst = std::max(worst, dv * dv);
                }
                acc += worst;
            }
            double res = std::sqrt(acc / static_cast<double>(n));
            sol.picard_residuals.push_back(res);
            if (res <= popts.tol) {
                sol.picard_converged = true;
                break;
            }
        }
        prev_y = sol.Y;
        prev_z = sol.Z;
        prev_h = sol.H;
    }
    sol.picard_iterations = sweeps - 1;
    return sol;
}

// Data-driven localization level: take the q-quantile over every (instant,
// path) pair of the largest bound any field is expected to need there and
// stand one unit above it.
inline double choose_truncation_level(const std::vector<PathSkeleton>& paths,
                                      const BoundConstants& k, double r, double q = 0.999) {
    if (paths.empty()) throw std::invalid_argument("choose_truncation_level: no paths");
    if (!(r >= 0.0)) throw std::invalid_argument("choose_truncation_level: r must be nonnegative");
    std::vector<double> vals;
    vals.reserve(paths.size() * (paths[0].values.size() + 1));
    for (const auto& sk : paths) {
        double sup = 0.0;
        std::size_t ji = 0;
        for (std::size_t i = 0; i < sk.values.size(); ++i) {
            const double post = sk.values[i];
            double jtot = 0.0;
            while (ji < sk.jumps.size() && sk.jumps[ji].time <= (*sk.times)[i]) jtot += sk.jumps[ji++].size;
            if (jtot != 0.0) sup = std::max(sup, std::fabs(post - jtot));
            sup = std::max(sup, std::fabs(post));
            const double need = std::max({k.c_y * (1.0 + std::pow(sup, r + 1.0)),
                                          k.a + k.b * std::pow(sup, r), sup});
            vals.push_back(need);
        }
    }
    return 1.0 + quantile_upper(std::move(vals), q);
}

// ---------------------------------------------------- bound verification --

struct BoundFit {
    double a = 0.0;
    double b = 0.0;
    double violation_rate = 0.0;
    std::size_t n = 0;
};

struct BoundReport {
    double tau = 0.99;
    double r = 0.0;
    BoundFit z_fit;
    BoundFit u_fit; // pooled over atoms after dividing by kappa_rho
    double c_y = 0.0;
    double y_violation_rate = 0.0;
    std::size_t n_y = 0;
};

namespace detail {

// Fit response <= a + b * regressor at quantile tau. The slope is fitted
// on a deterministic subsample (the pinball profile search is the pricey
// part), then the intercept is re-set to the tau-quantile of the full
// residual sample, which caps the violation rate at 1 - tau by the order
// statistic definition.
inline BoundFit fit_bound(const std::vector<double>& resp, const std::vector<double>& reg,
                          double tau) {
    BoundFit fit;
    fit.n = resp.size();
    if (resp.empty()) return fit;
    const std::size_t cap = 200000;
    const std::size_t stride = resp.size() > cap ? (resp.size() + cap - 1) / cap : 1;
    double b = 0.0;
    if (stride > 1) {
        std::vector<double> sr, sx;
        sr.reserve(resp.size() / stride + 1);
        sx.reserve(resp.size() / stride + 1);
        for (std::size_t i = 0; i < resp.size(); i += stride) {
            sr.push_back(resp[i]);
            sx.push_back(reg[i]);
        }
        b = fit_quantile_line(sr, sx, tau).b;
    } else {
        b = fit_quantile_line(resp, reg, tau).b;
    }
    std::vector<double> res(resp.size());
    for (std::size_t i = 0; i < resp.size(); ++i) res[i] = resp[i] - b * reg[i];
    double a = std::max(0.0, quantile_upper(std::move(res), tau));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < resp.size(); ++i)
        if (resp[i] > a + b * reg[i] + 1e-12) ++bad;
    fit.a = a;
    fit.b = b;
    fit.violation_rate = static_cast<double>(bad) / static_cast<double>(resp.size());
    return fit;
}

} // namespace detail

// Empirical check of the structural growth bounds on the solved fields:
//   |Y_i| <= c_y (1 + sup^{r+1}),  |Z_i| <= a + b sup^r,
//   |U_ij| <= (a + b sup^r) kappa_j,
// with sup the running supremum of |X| up to t_i. Constants are fitted at
// quantile tau; the report carries the residual violation rates.
inline BoundReport verify_bounds(const BsdeSolution& sol, double r,
                                 const std::vector<double>& kappa, double tau = 0.99) {
    if (kappa.size() != sol.U.size())
        throw std::invalid_argument("verify_bounds: one kappa per jump atom required");
    const std::size_t N = sol.Z.size();
    const std::size_t n = sol.Y.empty() ? 0 : sol.Y[0].size();
    if (n == 0) throw std::invalid_argument("verify_bounds: empty solution");
    BoundReport rep;
    rep.tau = tau;
    rep.r = r;

    {
        std::vector<double> ratio;
        ratio.reserve((N + 1) * n);
        for (std::size_t i = 0; i <= N; ++i)
            for (std::size_t q = 0; q < n; ++q)
                ratio.push_back(std::fabs(sol.Y[i][q]) /
                                (1.0 + std::pow(sol.sup_x[i][q], r + 1.0)));
        rep.n_y = ratio.size();
        rep.c_y = quantile_upper(ratio, tau);
        std::size_t bad = 0;
        for (double v : ratio)
            if (v > rep.c_y + 1e-12) ++bad;
        rep.y_violation_rate = static_cast<double>(bad) / static_cast<double>(ratio.size());
    }

    {
        std::vector<double> resp, reg;
        resp.reserve(N * n);
        reg.reserve(N * n);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t q = 0; q < n; ++q) {
                resp.push_back(std::fabs(sol.Z[i][q]));
                reg.push_back(std::pow(sol.sup_x[i][q], r));
            }
        rep.z_fit = detail::fit_bound(resp, reg, tau);
    }

    {
        std::vector<double> resp, reg;
        for (std::size_t j = 0; j < sol.U.size(); ++j) {
            if (!(kappa[j] > 0.0)) continue; // atom carries no jump response
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t q = 0; q < n; ++q) {
                    resp.push_back(std::fabs(sol.U[j][i][q]) / kappa[j]);
                    reg.push_back(std::pow(sol.sup_x[i][q], r));
                }
        }
        rep.u_fit = detail::fit_bound(resp, reg, tau);
    }
    return rep;
}

} // namespace fbsde
