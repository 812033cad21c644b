// Command line front end. Subcommands:
//   run <config>         solve the configured system and run its checks
//   check <config>       same pipeline, optionally restricted via --only
//   malliavin <config>   jump-derivative and coupled-noise diagnostics
//   inequality <case>    evaluate one of the canned inequality cases
// Exit codes: 0 when everything requested passed, 1 when a check failed,
// 2 on a config or usage problem.

#include "CLI11.hpp"
#include "fbsde/runner.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

void print_report(const fbsde::RunReport& rep, const std::string& output_dir) {
    std::printf("y0 = %.10g   (M = %g, method = %s, %zu paths, hash %s)\n", rep.y0, rep.M_used,
                rep.method.c_str(), rep.n_paths, rep.config_hash.c_str());
    if (rep.has_picard_y0) std::printf("y0 (picard) = %.10g\n", rep.y0_picard);
    for (const fbsde::CheckResult& c : rep.checks)
        std::printf("[%s] %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str());
    for (const std::string& e : rep.errors) std::printf("error: %s\n", e.c_str());
    std::printf("artifacts in %s (report.json, fields.csv, plot.py), %.2fs\n", output_dir.c_str(),
                rep.wall_seconds);
}

int execute(fbsde::ExperimentConfig cfg) {
    fbsde::RunReport rep = fbsde::run_experiment(cfg);
    print_report(rep, cfg.output_dir);
    return rep.all_pass ? 0 : 1;
}

int run_inequality_case(const std::string& which) {
    fbsde::Json out;
    bool pass = false;
    if (which == "gronwall") {
        fbsde::GronwallInstance inst;
        inst.eta.kind = fbsde::EtaSpec::Kind::linear;
        inst.p = 0.5;
        inst.sup_x = {1.0, 2.0, 3.0, 4.0};
        inst.h_T = {4.0, 4.0, 4.0, 4.0};
        inst.a_T = 0.0;
        fbsde::InequalityReport rep = fbsde::gronwall_check(inst);
        pass = rep.pass;
        out = fbsde::Json{{"case", which}, {"p", inst.p},      {"lhs", rep.lhs},
                          {"rhs", rep.rhs}, {"margin", rep.margin}, {"pass", rep.pass}};
    } else if (which == "bihari") {
        fbsde::GronwallInstance inst;
        inst.eta.kind = fbsde::EtaSpec::Kind::xlogx;
        inst.p = 0.5;
        inst.sup_x = {8.0, 9.0, 10.0, 11.0};
        inst.h_T = {4.0, 4.0, 4.0, 4.0};
        inst.a_T = 0.5;
        fbsde::InequalityReport rep = fbsde::bihari_check(inst);
        pass = rep.pass;
        out = fbsde::Json{{"case", which}, {"p", inst.p},      {"lhs", rep.lhs},
                          {"rhs", rep.rhs}, {"margin", rep.margin}, {"pass", rep.pass}};
    } else if (which == "fixedpoint") {
        fbsde::FixedPointProblem pr;
        pr.C = 1.0;
        pr.exponent = 0.5;
        fbsde::FixedPointResult res = fbsde::fixed_point(pr);
        const double closed_form = 12.0 + 8.0 * std::sqrt(2.0);
        pass = res.converged && std::fabs(res.value - closed_form) <= 1e-10;
        out = fbsde::Json{{"case", which},
                          {"value", res.value},
                          {"closed_form", closed_form},
                          {"iterations", res.iterations},
                          {"residual", res.residual},
                          {"pass", pass}};
    } else if (which == "apriori") {
        const double C = 1.0, dxi2 = std::exp(-10.0), df2 = 0.0, expX = 1.0;
        long n = fbsde::apriori_minimize(C, dxi2, df2, expX, 0, 40);
        pass = true;
        fbsde::Json curve = fbsde::Json::array();
        for (long k = std::max(0L, n - 2); k <= n + 2; ++k)
            curve.push_back(fbsde::Json{{"n", k}, {"rhs", fbsde::apriori_rhs(k, C, dxi2, df2, expX)}});
        out = fbsde::Json{{"case", which},
                          {"n_star", n},
                          {"rhs_at_n_star", fbsde::apriori_rhs(n, C, dxi2, df2, expX)},
                          {"neighborhood", curve},
                          {"pass", pass}};
    } else {
        std::cerr << "unknown inequality case '" << which << "'\n";
        return 2;
    }
    std::cout << out.dump(2) << "\n";
    return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo laboratory for jump-diffusion FBSDE systems"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = -1;
    std::string output_dir;
    std::vector<std::string> only;
    double shift_time = 0.0;
    int atom = -1;
    std::string which;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "JSON config file")->required();
        sub->add_option("--seed", seed, "override the config seed (beats FBSDE_SEED)");
        sub->add_option("--threads", threads, "worker threads, 0 means all hardware threads");
        sub->add_option("--output-dir", output_dir, "artifact directory (default from config)");
    };

    CLI::App* cmd_run = app.add_subcommand("run", "solve a config and run its checks");
    add_common(cmd_run);

    CLI::App* cmd_check = app.add_subcommand("check", "run checks, optionally a subset");
    add_common(cmd_check);
    cmd_check->add_option("--only", only, "comma separated check names")->delimiter(',');

    CLI::App* cmd_mall = app.add_subcommand("malliavin", "jump-derivative diagnostics");
    add_common(cmd_mall);
    CLI::Option* opt_shift =
        cmd_mall->add_option("--shift-time", shift_time, "where to insert the unit jump");
    CLI::Option* opt_atom = cmd_mall->add_option("--atom", atom, "jump atom index");

    CLI::App* cmd_ineq = app.add_subcommand("inequality", "evaluate a canned inequality case");
    cmd_ineq->add_option("case", which, "gronwall, bihari, fixedpoint or apriori")
        ->required()
        ->check(CLI::IsMember({"gronwall", "bihari", "fixedpoint", "apriori"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_ineq->parsed()) return run_inequality_case(which);

        fbsde::ExperimentConfig cfg = fbsde::load_config(config_path, seed);
        if (threads >= 0) cfg.threads = static_cast<std::size_t>(threads);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (cmd_check->parsed() && !only.empty()) {
            cfg.checks.clear();
            for (const std::string& name : only) cfg.checks.push_back(fbsde::check_from_name(name));
        }
        if (cmd_mall->parsed()) {
            cfg.checks = {fbsde::CheckKind::malliavin};
            if (*opt_atom) cfg.malliavin.atom = static_cast<std::size_t>(atom);
            if (*opt_shift) {
                fbsde::TimeGrid grid = fbsde::make_grid(cfg.T, cfg.n_intervals, cfg.extra_times);
                double snapped = grid.times[0];
                for (double t : grid.times)
                    if (std::fabs(t - shift_time) < std::fabs(snapped - shift_time)) snapped = t;
                if (std::fabs(snapped - shift_time) > 1e-12)
                    std::fprintf(stderr, "note: shift time %g is not a grid instant, using %g\n",
                                 shift_time, snapped);
                cfg.malliavin.shift_time = snapped;
            }
            auto bad = fbsde::validate_config(cfg);
            if (!bad.empty()) throw fbsde::ConfigError(std::move(bad));
        }
        return execute(std::move(cfg));
    } catch (const fbsde::ConfigError& e) {
        std::cerr << "config error:\n";
        for (const std::string& v : e.violations()) std::cerr << "  - " << v << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
