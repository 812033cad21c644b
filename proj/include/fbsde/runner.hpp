#pragma once

// Experiment orchestration: one entry point that samples noise, runs the
// forward scheme, picks the truncation level, solves backward, executes
// the requested checks, and emits the CSV / JSON / plot-script artifacts.
// Check failures and stage errors are collected, never rethrown past the
// report: a partial report with the error text is worth more than an
// aborted run.

#include "fbsde/config.hpp"
#include "fbsde/inequalities.hpp"
#include "fbsde/malliavin.hpp"
#include "fbsde/parallel.hpp"
#include "fbsde/runner_io.hpp"
#include "fbsde/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fbsde {

struct CheckResult {
    std::string name;
    bool pass = false;
    Json details;
};

struct RunReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string method;
    std::size_t n_paths = 0;
    std::size_t n_intervals = 0;
    double M_used = 0.0;
    double y0 = 0.0;
    bool has_picard_y0 = false;
    double y0_picard = 0.0;
    double max_condition = 0.0;
    std::size_t ridge_events = 0;
    std::vector<double> picard_residuals;
    std::vector<CheckResult> checks;
    std::vector<std::string> errors;
    bool all_pass = true;
    double wall_seconds = 0.0;
};

inline Json report_to_json(const RunReport& rep, const ExperimentConfig& cfg) {
    Json checks = Json::array();
    for (const CheckResult& c : rep.checks)
        checks.push_back(Json{{"name", c.name}, {"pass", c.pass}, {"details", c.details}});
    Json j{{"report_version", 1},
           {"config_hash", rep.config_hash},
           {"seed", rep.seed},
           {"method", rep.method},
           {"n_paths", rep.n_paths},
           {"n_intervals", rep.n_intervals},
           {"truncation_level", rep.M_used},
           {"y0", rep.y0},
           {"max_condition", rep.max_condition},
           {"ridge_events", rep.ridge_events},
           {"checks", checks},
           {"errors", rep.errors},
           {"all_pass", rep.all_pass},
           {"wall_seconds", rep.wall_seconds},
           {"config", config_to_json(cfg)}};
    if (rep.has_picard_y0) j["y0_picard"] = rep.y0_picard;
    if (!rep.picard_residuals.empty()) j["picard_residuals"] = rep.picard_residuals;
    return j;
}

namespace detail {

inline BsdeSolution solve_with(const ExperimentConfig& cfg, SolveMethod method,
                               const std::vector<PathSkeleton>& paths, const NoiseBundle& bundle,
                               double M, int threads) {
    SolverOptions sopts;
    sopts.basis = cfg.basis;
    sopts.ridge_scale = cfg.ridge_scale;
    sopts.threads = threads;
    if (method == SolveMethod::picard)
        return picard_solve(paths, bundle, cfg.driver, M, sopts, cfg.picard);
    return lsmc_solve(paths, bundle, cfg.driver, M, sopts);
}

// |y0 - mean(g + sum f dt)| against three standard errors of the sample;
// the driver is evaluated along the solved fields
inline CheckResult check_martingale(const ExperimentConfig& cfg, const BsdeSolution& sol) {
    TruncatedData trunc = truncated_data(cfg.driver, sol.M_used);
    const std::size_t N = sol.Z.size();
    const std::size_t n = sol.Y[0].size();
    std::vector<double> total(n);
    for (std::size_t q = 0; q < n; ++q) {
        double acc = sol.Y[N][q];
        for (std::size_t i = 0; i < N; ++i) {
            double pt = sol.path_term.empty() ? 0.0 : sol.path_term[i][q];
            acc += (sol.t[i + 1] - sol.t[i]) *
                   trunc.f_value(sol.t[i], pt, sol.Y[i][q], sol.Z[i][q], sol.H[i][q]);
        }
        total[q] = acc;
    }
    MeanStats st = mean_stats(total);
    double gap = std::fabs(sol.y0 - st.mean);
    double band = 3.0 * st.std_error + 1e-6 * (1.0 + std::fabs(sol.y0));
    CheckResult res;
    res.name = "martingale";
    res.pass = gap <= band;
    res.details = Json{{"y0", sol.y0}, {"terminal_mean", st.mean}, {"gap", gap}, {"band", band}};
    return res;
}

inline CheckResult check_bounds(const ExperimentConfig& cfg, const BsdeSolution& sol) {
    std::vector<double> kappa(cfg.measure.atoms.size());
    for (std::size_t j = 0; j < kappa.size(); ++j)
        kappa[j] = cfg.forward.rho.kappa(j, cfg.measure.atoms[j].mark);
    BoundReport rep = verify_bounds(sol, cfg.driver.params.r, kappa, cfg.bounds_tau);
    double cap = 1.0 - cfg.bounds_tau + 1e-9;
    CheckResult res;
    res.name = "bounds";
    res.pass = rep.y_violation_rate <= cap && rep.z_fit.violation_rate <= cap &&
               rep.u_fit.violation_rate <= cap;
    res.details = Json{{"tau", rep.tau},
                       {"r", rep.r},
                       {"c_y", rep.c_y},
                       {"y_violation_rate", rep.y_violation_rate},
                       {"z", Json{{"a", rep.z_fit.a},
                                  {"b", rep.z_fit.b},
                                  {"violation_rate", rep.z_fit.violation_rate},
                                  {"n", rep.z_fit.n}}},
                       {"u", Json{{"a", rep.u_fit.a},
                                  {"b", rep.u_fit.b},
                                  {"violation_rate", rep.u_fit.violation_rate},
                                  {"n", rep.u_fit.n}}}};
    return res;
}

inline CheckResult check_gronwall(const ExperimentConfig& cfg, const EulerResult& forward,
                                  const TimeGrid& grid) {
    CheckResult res;
    res.name = "gronwall";
    res.pass = true;
    res.details = Json::array();
    for (double p : {0.25, 0.5, 0.75}) {
        GronwallInstance inst = gronwall_from_forward(cfg.forward, forward, grid, p);
        InequalityReport rep = gronwall_check(inst);
        res.pass = res.pass && rep.pass;
        res.details.push_back(Json{{"p", p},
                                   {"lhs", rep.lhs},
                                   {"rhs", rep.rhs},
                                   {"margin", rep.margin},
                                   {"rel_se", rep.rel_se},
                                   {"pass", rep.pass}});
    }
    return res;
}

inline CheckResult check_bihari(const ExperimentConfig& cfg, const EulerResult& forward,
                                const TimeGrid& grid) {
    GronwallInstance inst =
        bihari_from_forward(cfg.forward, cfg.measure, forward, grid, cfg.exp_moment.c, 0.5);
    InequalityReport rep = bihari_check(inst);
    CheckResult res;
    res.name = "bihari";
    res.pass = rep.pass;
    res.details = Json{{"p", 0.5},      {"c", cfg.exp_moment.c}, {"lhs", rep.lhs},
                       {"rhs", rep.rhs}, {"margin", rep.margin},  {"rel_se", rep.rel_se}};
    return res;
}

inline CheckResult check_exp_moment(const ExperimentConfig& cfg, const TimeGrid& grid,
                                    int threads) {
    ExpMomentRefinement ref =
        exp_moment_refinement(cfg.forward, grid, cfg.measure, cfg.n_paths, cfg.seed,
                              cfg.exp_moment.c, cfg.exp_moment.mode, threads);
    CheckResult res;
    res.name = "exp_moment";
    res.pass = !ref.coarse.overflowed && !ref.fine.overflowed && ref.ratio <= 0.05;
    res.details = Json{{"c", cfg.exp_moment.c},
                       {"coarse_log_estimate", ref.coarse.log_estimate},
                       {"fine_log_estimate", ref.fine.log_estimate},
                       {"mesh_ratio", ref.ratio},
                       {"top_share", ref.coarse.top_share},
                       {"overflowed", ref.coarse.overflowed || ref.fine.overflowed}};
    return res;
}

inline CheckResult check_malliavin(const ExperimentConfig& cfg, const TimeGrid& grid, double M,
                                   int threads) {
    CheckResult res;
    res.name = "malliavin";
    res.pass = true;

    // phi grid, largest first so the curve should decrease toward 1
    std::vector<double> phis = cfg.malliavin.phis;
    std::sort(phis.begin(), phis.end(), std::greater<double>());
    std::size_t np = std::min(cfg.malliavin.n_paths, cfg.n_paths);
    auto curve = quotient_curve(cfg.forward, cfg.driver.g, grid, cfg.measure, np, cfg.seed + 1,
                                phis, threads);
    Json curve_json = Json::array();
    bool monotone = true;
    for (std::size_t k = 0; k < curve.size(); ++k) {
        if (k > 0) {
            double slack = 3.0 * std::sqrt(curve[k - 1].std_error * curve[k - 1].std_error +
                                           curve[k].std_error * curve[k].std_error);
            if (curve[k].value > curve[k - 1].value + slack) monotone = false;
        }
        curve_json.push_back(Json{{"phi", curve[k].phi},
                                  {"value", curve[k].value},
                                  {"std_error", curve[k].std_error}});
    }
    res.details = Json{{"quotient_curve", curve_json}, {"monotone", monotone}};
    res.pass = res.pass && monotone;

    if (!cfg.measure.atoms.empty()) {
        // snap the shift to the nearest base instant
        double s = grid.times[0];
        for (double t : grid.times)
            if (std::fabs(t - cfg.malliavin.shift_time) < std::fabs(s - cfg.malliavin.shift_time))
                s = t;
        NoiseBundle nb = sample_noise(grid, cfg.measure, np, cfg.seed + 2, false, threads);
        SolverOptions sopts;
        sopts.basis = cfg.basis;
        sopts.ridge_scale = cfg.ridge_scale;
        sopts.threads = threads;
        SolutionDerivative der =
            solution_jump_derivative(cfg.forward, cfg.driver, M, nb, s, cfg.malliavin.atom, sopts);
        const double kap = cfg.forward.rho.kappa(cfg.malliavin.atom,
                                                 cfg.measure.atoms[cfg.malliavin.atom].mark);
        double worst = 0.0;
        if (kap > 0.0) {
            for (std::size_t i = 0; i < der.t.size(); ++i) {
                if (der.t[i] < s) continue;
                double cap = kap * std::exp(cfg.forward.L_b * (der.t[i] - s));
                for (double v : der.dX[i]) worst = std::max(worst, std::fabs(v) / cap);
            }
        }
        double mesh = grid.mesh();
        bool dx_ok = worst <= 1.0 + 5.0 * mesh;
        res.details["shift_time"] = s;
        res.details["atom"] = cfg.malliavin.atom;
        res.details["dx_bound_ratio"] = worst;
        res.details["dx_bound_ok"] = dx_ok;
        res.pass = res.pass && dx_ok;
    }
    return res;
}

inline CheckResult check_truncation_stability(const ExperimentConfig& cfg,
                                              const std::vector<PathSkeleton>& paths,
                                              const NoiseBundle& bundle, const BsdeSolution& sol,
                                              int threads) {
    SolveMethod m = cfg.method == SolveMethod::both ? SolveMethod::lsmc : cfg.method;
    BsdeSolution doubled = solve_with(cfg, m, paths, bundle, 2.0 * sol.M_used, threads);
    double gap = std::fabs(doubled.y0 - sol.y0);
    double band = std::max(0.01 * std::fabs(sol.y0), 1e-8);
    CheckResult res;
    res.name = "truncation_stability";
    res.pass = gap <= band;
    res.details = Json{{"M", sol.M_used},
                       {"M_doubled", 2.0 * sol.M_used},
                       {"y0", sol.y0},
                       {"y0_doubled", doubled.y0},
                       {"gap", gap},
                       {"band", band}};
    return res;
}

} // namespace detail

inline RunReport run_experiment(const ExperimentConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    {
        auto bad = validate_config(cfg);
        if (!bad.empty()) throw ConfigError(std::move(bad));
    }
    const int threads = static_cast<int>(resolve_threads(cfg.threads));

    RunReport rep;
    rep.config_hash = config_hash(cfg);
    rep.seed = cfg.seed;
    rep.method = method_name(cfg.method);
    rep.n_paths = cfg.n_paths;
    rep.n_intervals = cfg.n_intervals;

    TimeGrid grid = make_grid(cfg.T, cfg.n_intervals, cfg.extra_times);
    NoiseBundle bundle = sample_noise(grid, cfg.measure, cfg.n_paths, cfg.seed, false, threads);
    EulerOptions eopts;
    eopts.threads = threads;
    EulerResult forward = euler_solve(cfg.forward, bundle, eopts);

    double M = cfg.truncation.M;
    if (cfg.truncation.mode == TruncationPolicy::Mode::automatic)
        M = std::max(2.0, choose_truncation_level(forward.paths, cfg.truncation.constants,
                                                  cfg.driver.params.r, cfg.truncation.quantile));

    SolveMethod primary = cfg.method == SolveMethod::picard ? SolveMethod::picard : SolveMethod::lsmc;
    BsdeSolution sol = detail::solve_with(cfg, primary, forward.paths, bundle, M, threads);
    rep.M_used = sol.M_used;
    rep.y0 = sol.y0;
    rep.max_condition = sol.max_condition;
    rep.ridge_events = sol.ridge_events;
    rep.picard_residuals = sol.picard_residuals;
    if (cfg.method == SolveMethod::both) {
        BsdeSolution pic =
            detail::solve_with(cfg, SolveMethod::picard, forward.paths, bundle, M, threads);
        rep.has_picard_y0 = true;
        rep.y0_picard = pic.y0;
        rep.picard_residuals = pic.picard_residuals;
    }

    for (CheckKind kind : cfg.checks) {
        CheckResult res;
        res.name = check_name(kind);
        try {
            switch (kind) {
                case CheckKind::bounds: res = detail::check_bounds(cfg, sol); break;
                case CheckKind::martingale: res = detail::check_martingale(cfg, sol); break;
                case CheckKind::gronwall: res = detail::check_gronwall(cfg, forward, grid); break;
                case CheckKind::bihari: res = detail::check_bihari(cfg, forward, grid); break;
                case CheckKind::exp_moment:
                    res = detail::check_exp_moment(cfg, grid, threads);
                    break;
                case CheckKind::malliavin:
                    res = detail::check_malliavin(cfg, grid, M, threads);
                    break;
                case CheckKind::truncation_stability:
                    res = detail::check_truncation_stability(cfg, forward.paths, bundle, sol,
                                                             threads);
                    break;
            }
        } catch (const std::exception& e) {
            res.pass = false;
            res.details = Json{{"error", e.what()}};
            rep.errors.push_back(res.name + ": " + e.what());
        }
        rep.all_pass = rep.all_pass && res.pass;
        rep.checks.push_back(std::move(res));
    }

    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream csv(std::filesystem::path(cfg.output_dir) / "fields.csv");
        write_fields_csv(csv, cfg.csv_max_paths, forward.paths, bundle, sol);
    }
    {
        std::ofstream py(std::filesystem::path(cfg.output_dir) / "plot.py");
        write_plot_script(py);
    }

    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
        std::ofstream js(std::filesystem::path(cfg.output_dir) / "report.json");
        js << report_to_json(rep, cfg).dump(2) << "\n";
    }
    return rep;
}

} // namespace fbsde
