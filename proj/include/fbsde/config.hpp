#pragma once

// Experiment configuration: the JSON schema both ways, load-time
// validation that reports every violated constraint at once, and a
// canonical content hash for reproduction bookkeeping. nlohmann objects
// are map-backed, so a dump of the fully materialized config is already
// key-sorted and serves as the canonical form.

#include "fbsde/forward.hpp"
#include "fbsde/solver.hpp"
#include "fbsde/truncation.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

using Json = nlohmann::json;

enum class SolveMethod { lsmc, picard, both };

enum class CheckKind {
    bounds,
    martingale,
    gronwall,
    bihari,
    exp_moment,
    malliavin,
    truncation_stability,
};

struct TruncationPolicy {
    enum class Mode { automatic, fixed } mode = Mode::automatic;
    double M = 8.0;          // fixed mode
    double quantile = 0.999; // automatic mode
    BoundConstants constants;
};

struct MalliavinConfig {
    double shift_time = 0.5;
    std::size_t atom = 0;
    std::vector<double> phis{1.0, 0.5, 0.25, 0.125};
    std::size_t n_paths = 20000; // derivative re-solves run at reduced size
};

struct ExpMomentConfig {
    double c = 1.0;
    ExpMomentMode mode = ExpMomentMode::sup;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t n_paths = 10000;
    int threads = 0; // 0 = all logical cores
    std::string output_dir = "out";
    std::size_t csv_max_paths = 64;

    double T = 1.0;
    std::size_t n_intervals = 64;
    std::vector<double> extra_times;

    JumpMeasure measure;
    ForwardModel forward;
    DriverSpec driver;

    SolveMethod method = SolveMethod::lsmc;
    RegressionBasis basis = RegressionBasis::defaults();
    double ridge_scale = 1e-8;
    PicardOptions picard;
    TruncationPolicy truncation;
    double bounds_tau = 0.99;
    ExpMomentConfig exp_moment;
    MalliavinConfig malliavin;
    std::vector<CheckKind> checks;
};

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(std::vector<std::string> violations)
        : std::runtime_error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const { return violations_; }

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "configuration invalid:";
        for (const auto& x : v) s += "\n  - " + x;
        return s;
    }
    std::vector<std::string> violations_;
};

// ------------------------------------------------------- enum <-> string --

inline std::string check_name(CheckKind c) {
    switch (c) {
        case CheckKind::bounds: return "bounds";
        case CheckKind::martingale: return "martingale";
        case CheckKind::gronwall: return "gronwall";
        case CheckKind::bihari: return "bihari";
        case CheckKind::exp_moment: return "exp_moment";
        case CheckKind::malliavin: return "malliavin";
        case CheckKind::truncation_stability: return "truncation_stability";
    }
    return "?";
}

inline CheckKind check_from_name(const std::string& s) {
    for (CheckKind c : {CheckKind::bounds, CheckKind::martingale, CheckKind::gronwall,
                        CheckKind::bihari, CheckKind::exp_moment, CheckKind::malliavin,
                        CheckKind::truncation_stability})
        if (check_name(c) == s) return c;
    throw ConfigError({"unknown check '" + s + "'"});
}

inline std::string method_name(SolveMethod m) {
    switch (m) {
        case SolveMethod::lsmc: return "lsmc";
        case SolveMethod::picard: return "picard";
        case SolveMethod::both: return "both";
    }
    return "?";
}

inline SolveMethod method_from_name(const std::string& s) {
    for (SolveMethod m : {SolveMethod::lsmc, SolveMethod::picard, SolveMethod::both})
        if (method_name(m) == s) return m;
    throw ConfigError({"unknown solver method '" + s + "'"});
}

namespace detail {

inline std::string kind_name(FunctionalKind k) {
    switch (k) {
        case FunctionalKind::terminal_point: return "terminal_point";
        case FunctionalKind::sup_norm: return "sup_norm";
        case FunctionalKind::first_jump: return "first_jump";
        case FunctionalKind::max_jump: return "max_jump";
        case FunctionalKind::jump_at: return "jump_at";
        case FunctionalKind::integral: return "integral";
        case FunctionalKind::point_eval: return "point_eval";
        case FunctionalKind::linear: return "linear";
        case FunctionalKind::composite: return "composite";
    }
    return "?";
}

inline FunctionalKind kind_from_name(const std::string& s) {
    for (FunctionalKind k :
         {FunctionalKind::terminal_point, FunctionalKind::sup_norm, FunctionalKind::first_jump,
          FunctionalKind::max_jump, FunctionalKind::jump_at, FunctionalKind::integral,
          FunctionalKind::point_eval, FunctionalKind::linear, FunctionalKind::composite})
        if (kind_name(k) == s) return k;
    throw ConfigError({"unknown functional kind '" + s + "'"});
}

inline std::string map_name(ScalarMap::Kind k) {
    switch (k) {
        case ScalarMap::Kind::identity: return "identity";
        case ScalarMap::Kind::abs: return "abs";
        case ScalarMap::Kind::affine: return "affine";
        case ScalarMap::Kind::tanh_scaled: return "tanh_scaled";
    }
    return "?";
}

inline ScalarMap::Kind map_from_name(const std::string& s) {
    for (ScalarMap::Kind k : {ScalarMap::Kind::identity, ScalarMap::Kind::abs,
                              ScalarMap::Kind::affine, ScalarMap::Kind::tanh_scaled})
        if (map_name(k) == s) return k;
    throw ConfigError({"unknown scalar map kind '" + s + "'"});
}

// --------------------------------------------------------- spec <-> json --

inline Json scalar_map_to_json(const ScalarMap& m) {
    return Json{{"kind", map_name(m.kind)}, {"a", m.a}, {"b", m.b}};
}

inline ScalarMap scalar_map_from_json(const Json& j) {
    ScalarMap m;
    m.kind = map_from_name(j.value("kind", std::string("identity")));
    m.a = j.value("a", 1.0);
    m.b = j.value("b", 0.0);
    return m;
}

inline Json functional_to_json(const PathFunctional& f) {
    Json atoms = Json::array();
    for (const auto& a : f.measure.atoms) atoms.push_back(Json::array({a.first, a.second}));
    Json weights = Json::array();
    for (const auto& w : f.jump_weights) weights.push_back(Json::array({w.first, w.second}));
    return Json{{"kind", kind_name(f.kind)},
                {"at", f.at},
                {"measure", Json{{"lebesgue", f.measure.lebesgue_weight}, {"atoms", atoms}}},
                {"jump_weights", weights},
                {"outer", scalar_map_to_json(f.outer)},
                {"inner", scalar_map_to_json(f.inner)},
                {"profile", Json{{"c", f.profile.c}, {"alpha", f.profile.alpha}, {"r", f.profile.r}}}};
}

inline PathFunctional functional_from_json(const Json& j) {
    PathFunctional f = make_functional(kind_from_name(j.value("kind", std::string("terminal_point"))));
    f.at = j.value("at", 0.0);
    if (j.contains("measure")) {
        const Json& m = j.at("measure");
        f.measure.lebesgue_weight = m.value("lebesgue", 0.0);
        for (const auto& a : m.value("atoms", Json::array()))
            f.measure.atoms.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
    }
    for (const auto& w : j.value("jump_weights", Json::array()))
        f.jump_weights.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
    if (j.contains("outer")) f.outer = scalar_map_from_json(j.at("outer"));
    if (j.contains("inner")) f.inner = scalar_map_from_json(j.at("inner"));
    if (j.contains("profile")) {
        const Json& p = j.at("profile");
        f.profile.c = p.value("c", f.profile.c);
        f.profile.alpha = p.value("alpha", f.profile.alpha);
        f.profile.r = p.value("r", f.profile.r);
    }
    return f;
}

inline Json sigma_to_json(const SigmaSpec& s) {
    if (s.kind == SigmaSpec::Kind::constant) return Json{{"kind", "constant"}, {"value", s.value}};
    return Json{{"kind", "table"}, {"times", s.times}, {"values", s.values}};
}

inline SigmaSpec sigma_from_json(const Json& j) {
    SigmaSpec s;
    std::string k = j.value("kind", std::string("constant"));
    if (k == "constant") {
        s.kind = SigmaSpec::Kind::constant;
        s.value = j.value("value", 0.0);
    } else if (k == "table") {
        s.kind = SigmaSpec::Kind::table;
        s.times = j.value("times", std::vector<double>{});
        s.values = j.value("values", std::vector<double>{});
    } else {
        throw ConfigError({"unknown sigma kind '" + k + "'"});
    }
    return s;
}

inline Json rho_to_json(const RhoSpec& r) {
    if (r.kind == RhoSpec::Kind::mark) return Json{{"kind", "mark"}};
    return Json{{"kind", "table"}, {"values", r.values}};
}

inline RhoSpec rho_from_json(const Json& j) {
    RhoSpec r;
    std::string k = j.value("kind", std::string("mark"));
    if (k == "mark") {
        r.kind = RhoSpec::Kind::mark;
    } else if (k == "table") {
        r.kind = RhoSpec::Kind::table;
        r.values = j.value("values", std::vector<double>{});
    } else {
        throw ConfigError({"unknown rho kind '" + k + "'"});
    }
    return r;
}

inline Json h_to_json(const HSpec& h) {
    return Json{{"kind", h.kind == HSpec::Kind::linear ? "linear" : "power"},
                {"scale", h.scale},
                {"power", h.power}};
}

inline HSpec h_from_json(const Json& j) {
    HSpec h;
    std::string k = j.value("kind", std::string("linear"));
    if (k == "linear")
        h.kind = HSpec::Kind::linear;
    else if (k == "power")
        h.kind = HSpec::Kind::power;
    else
        throw ConfigError({"unknown h kind '" + k + "'"});
    h.scale = j.value("scale", 1.0);
    h.power = j.value("power", 0.0);
    return h;
}

inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace detail

inline Json config_to_json(const ExperimentConfig& c) {
    Json atoms = Json::array();
    for (const auto& a : c.measure.atoms)
        atoms.push_back(Json{{"mark", a.mark}, {"intensity", a.intensity}});
    Json basis = Json::array();
    for (auto f : c.basis.features) basis.push_back(feature_name(f));
    Json checks = Json::array();
    for (auto k : c.checks) checks.push_back(check_name(k));
    Json phis = Json::array();
    for (double p : c.malliavin.phis) phis.push_back(p);

    return Json{
        {"seed", c.seed},
        {"n_paths", c.n_paths},
        {"threads", c.threads},
        {"output_dir", c.output_dir},
        {"csv_max_paths", c.csv_max_paths},
        {"grid", Json{{"T", c.T}, {"n_intervals", c.n_intervals}, {"extra_times", c.extra_times}}},
        {"jumps", Json{{"atoms", atoms}}},
        {"forward",
         Json{{"x0", c.forward.x0},
              {"drift", Json{{"b0", c.forward.drift.b0},
                             {"coef", c.forward.drift.coef},
                             {"functional", detail::functional_to_json(c.forward.drift.functional)}}},
              {"sigma", detail::sigma_to_json(c.forward.sigma)},
              {"rho", detail::rho_to_json(c.forward.rho)},
              {"K_b", c.forward.K_b},
              {"L_b", c.forward.L_b},
              {"K_sigma", c.forward.K_sigma}}},
        {"driver",
         Json{{"g", detail::functional_to_json(c.driver.g)},
              {"f_const", c.driver.f_const},
              {"path_coef", c.driver.path_coef},
              {"path_functional", detail::functional_to_json(c.driver.path_functional)},
              {"y_coef", c.driver.y_coef},
              {"z_coef", c.driver.z_coef},
              {"z_pow_coef", c.driver.z_pow_coef},
              {"u_coef", c.driver.u_coef},
              {"u_pow_coef", c.driver.u_pow_coef},
              {"h", detail::h_to_json(c.driver.h)},
              {"params", Json{{"c", c.driver.params.c},
                              {"ell", c.driver.params.ell},
                              {"r", c.driver.params.r},
                              {"alpha", c.driver.params.alpha},
                              {"beta", c.driver.params.beta},
                              {"gamma", c.driver.params.gamma},
                              {"L_fy", c.driver.params.L_fy},
                              {"m1", c.driver.params.m1},
                              {"m2", c.driver.params.m2},
                              {"k_f", c.driver.params.k_f}}}}},
        {"solver",
         Json{{"method", method_name(c.method)},
              {"basis", basis},
              {"ridge_scale", c.ridge_scale},
              {"picard", Json{{"tol", c.picard.tol}, {"max_sweeps", c.picard.max_sweeps}}},
              {"truncation",
               Json{{"policy", c.truncation.mode == TruncationPolicy::Mode::automatic ? "auto" : "fixed"},
                    {"M", c.truncation.M},
                    {"quantile", c.truncation.quantile},
                    {"constants", Json{{"a", c.truncation.constants.a},
                                       {"b", c.truncation.constants.b},
                                       {"c_y", c.truncation.constants.c_y}}}}}}},
        {"bounds", Json{{"tau", c.bounds_tau}}},
        {"exp_moment", Json{{"c", c.exp_moment.c},
                            {"mode", c.exp_moment.mode == ExpMomentMode::sup ? "sup" : "terminal"}}},
        {"malliavin", Json{{"shift_time", c.malliavin.shift_time},
                           {"atom", c.malliavin.atom},
                           {"phis", phis},
                           {"n_paths", c.malliavin.n_paths}}},
        {"checks", checks},
    };
}

inline ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    c.n_paths = j.value("n_paths", c.n_paths);
    c.threads = j.value("threads", c.threads);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.csv_max_paths = j.value("csv_max_paths", c.csv_max_paths);
    if (j.contains("grid")) {
        const Json& g = j.at("grid");
        c.T = g.value("T", c.T);
        c.n_intervals = g.value("n_intervals", c.n_intervals);
        c.extra_times = g.value("extra_times", c.extra_times);
    }
    if (j.contains("jumps"))
        for (const auto& a : j.at("jumps").value("atoms", Json::array()))
            c.measure.atoms.push_back(
                JumpAtom{a.value("mark", 0.0), a.value("intensity", 0.0)});
    if (j.contains("forward")) {
        const Json& f = j.at("forward");
        c.forward.x0 = f.value("x0", 0.0);
        if (f.contains("drift")) {
            const Json& d = f.at("drift");
            c.forward.drift.b0 = d.value("b0", 0.0);
            c.forward.drift.coef = d.value("coef", 0.0);
            if (d.contains("functional"))
                c.forward.drift.functional = detail::functional_from_json(d.at("functional"));
        }
        if (f.contains("sigma")) c.forward.sigma = detail::sigma_from_json(f.at("sigma"));
        if (f.contains("rho")) c.forward.rho = detail::rho_from_json(f.at("rho"));
        c.forward.K_b = f.value("K_b", 0.0);
        c.forward.L_b = f.value("L_b", 0.0);
        c.forward.K_sigma = f.value("K_sigma", 0.0);
    }
    if (j.contains("driver")) {
        const Json& d = j.at("driver");
        if (d.contains("g")) c.driver.g = detail::functional_from_json(d.at("g"));
        c.driver.f_const = d.value("f_const", 0.0);
        c.driver.path_coef = d.value("path_coef", 0.0);
        if (d.contains("path_functional"))
            c.driver.path_functional = detail::functional_from_json(d.at("path_functional"));
        c.driver.y_coef = d.value("y_coef", 0.0);
        c.driver.z_coef = d.value("z_coef", 0.0);
        c.driver.z_pow_coef = d.value("z_pow_coef", 0.0);
        c.driver.u_coef = d.value("u_coef", 0.0);
        c.driver.u_pow_coef = d.value("u_pow_coef", 0.0);
        if (d.contains("h")) c.driver.h = detail::h_from_json(d.at("h"));
        if (d.contains("params")) {
            const Json& p = d.at("params");
            auto& dp = c.driver.params;
            dp.c = p.value("c", dp.c);
            dp.ell = p.value("ell", dp.ell);
            dp.r = p.value("r", dp.r);
            dp.alpha = p.value("alpha", dp.alpha);
            dp.beta = p.value("beta", dp.beta);
            dp.gamma = p.value("gamma", dp.gamma);
            dp.L_fy = p.value("L_fy", dp.L_fy);
            dp.m1 = p.value("m1", dp.m1);
            dp.m2 = p.value("m2", dp.m2);
            dp.k_f = p.value("k_f", dp.k_f);
        }
    }
    if (j.contains("solver")) {
        const Json& s = j.at("solver");
        c.method = method_from_name(s.value("method", std::string("lsmc")));
        if (s.contains("basis")) {
            c.basis.features.clear();
            for (const auto& b : s.at("basis")) c.basis.features.push_back(feature_from_name(b));
        }
        c.ridge_scale = s.value("ridge_scale", c.ridge_scale);
        if (s.contains("picard")) {
            c.picard.tol = s.at("picard").value("tol", c.picard.tol);
            c.picard.max_sweeps = s.at("picard").value("max_sweeps", c.picard.max_sweeps);
        }
        if (s.contains("truncation")) {
            const Json& t = s.at("truncation");
            std::string pol = t.value("policy", std::string("auto"));
            if (pol == "auto")
                c.truncation.mode = TruncationPolicy::Mode::automatic;
            else if (pol == "fixed")
                c.truncation.mode = TruncationPolicy::Mode::fixed;
            else
                throw ConfigError({"unknown truncation policy '" + pol + "'"});
            c.truncation.M = t.value("M", c.truncation.M);
            c.truncation.quantile = t.value("quantile", c.truncation.quantile);
            if (t.contains("constants")) {
                const Json& k = t.at("constants");
                c.truncation.constants.a = k.value("a", 1.0);
                c.truncation.constants.b = k.value("b", 1.0);
                c.truncation.constants.c_y = k.value("c_y", 1.0);
            }
        }
    }
    if (j.contains("bounds")) c.bounds_tau = j.at("bounds").value("tau", c.bounds_tau);
    if (j.contains("exp_moment")) {
        const Json& e = j.at("exp_moment");
        c.exp_moment.c = e.value("c", c.exp_moment.c);
        std::string m = e.value("mode", std::string("sup"));
        if (m == "sup")
            c.exp_moment.mode = ExpMomentMode::sup;
        else if (m == "terminal")
            c.exp_moment.mode = ExpMomentMode::terminal;
        else
            throw ConfigError({"unknown exp_moment mode '" + m + "'"});
    }
    if (j.contains("malliavin")) {
        const Json& m = j.at("malliavin");
        c.malliavin.shift_time = m.value("shift_time", c.malliavin.shift_time);
        c.malliavin.atom = m.value("atom", c.malliavin.atom);
        c.malliavin.phis = m.value("phis", c.malliavin.phis);
        c.malliavin.n_paths = m.value("n_paths", c.malliavin.n_paths);
    }
    if (j.contains("checks")) {
        c.checks.clear();
        for (const auto& k : j.at("checks")) c.checks.push_back(check_from_name(k));
    }
    return c;
}

// Every violated constraint, each message naming the inequality it breaks.
inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
    std::vector<std::string> bad;
    auto collect = [&bad](const char* where, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            bad.push_back(std::string(where) + ": " + e.what());
        }
    };

    collect("grid", [&] { make_grid(c.T, c.n_intervals, c.extra_times); });
    collect("jumps", [&] { validate_measure(c.measure); });
    collect("forward", [&] { validate_model(c.forward, c.measure); });
    for (const auto& v : validate_driver(c.driver)) bad.push_back(v);

    if (c.n_paths < 2) bad.push_back("n_paths must be >= 2");
    if (c.basis.size() == 0 || c.basis.size() > kMaxFeatures)
        bad.push_back("solver.basis must list between 1 and 8 features");
    if (c.truncation.mode == TruncationPolicy::Mode::fixed && !(c.truncation.M > 1.0))
        bad.push_back("solver.truncation: fixed level violates M > 1");
    if (!(c.truncation.quantile > 0.0 && c.truncation.quantile <= 1.0))
        bad.push_back("solver.truncation: quantile must lie in (0,1]");
    if (c.truncation.constants.a < 0.0 || c.truncation.constants.b < 0.0 ||
        c.truncation.constants.c_y < 0.0)
        bad.push_back("solver.truncation: constants a, b, c_y must be nonnegative");
    if (!(c.picard.tol > 0.0)) bad.push_back("solver.picard: tol must be positive");
    if (c.picard.max_sweeps < 2) bad.push_back("solver.picard: max_sweeps must be >= 2");
    if (!(c.bounds_tau > 0.5 && c.bounds_tau < 1.0))
        bad.push_back("bounds.tau must lie in (0.5, 1)");
    if (!(c.exp_moment.c > 0.0)) bad.push_back("exp_moment.c must be positive");
    if (!(c.malliavin.shift_time >= 0.0 && c.malliavin.shift_time <= c.T))
        bad.push_back("malliavin.shift_time must lie in [0, T]");
    if (c.malliavin.phis.empty()) bad.push_back("malliavin.phis must not be empty");
    for (double p : c.malliavin.phis)
        if (!(p > 0.0 && p <= 1.0)) {
            bad.push_back("malliavin.phis entries must lie in (0,1]");
            break;
        }
    if (c.malliavin.n_paths < 2) bad.push_back("malliavin.n_paths must be >= 2");
    bool wants_malliavin = false;
    for (auto k : c.checks)
        if (k == CheckKind::malliavin) wants_malliavin = true;
    if (wants_malliavin && !c.measure.atoms.empty() && c.malliavin.atom >= c.measure.atoms.size())
        bad.push_back("malliavin.atom must index a jump atom");
    return bad;
}

// FNV-1a of the canonical dump, with fields that cannot change results
// (worker count, output location) removed first.
inline std::string config_hash(const ExperimentConfig& c) {
    Json j = config_to_json(c);
    j.erase("threads");
    j.erase("output_dir");
    return detail::fnv1a_hex(j.dump());
}

// seed precedence: explicit CLI value, then the FBSDE_SEED environment
// variable, then the file
inline ExperimentConfig load_config(const std::string& path,
                                    std::optional<std::uint64_t> cli_seed = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError({"parse error in '" + path + "': " + e.what()});
    }
    ExperimentConfig c = config_from_json(j);
    if (const char* env = std::getenv("FBSDE_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw ConfigError({"FBSDE_SEED must be an unsigned integer, got '" + std::string(env) + "'"});
        c.seed = static_cast<std::uint64_t>(v);
    }
    if (cli_seed) c.seed = *cli_seed;
    auto bad = validate_config(c);
    if (!bad.empty()) throw ConfigError(std::move(bad));
    return c;
}

} // namespace fbsde
