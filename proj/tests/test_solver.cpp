#include <catch2/catch_amalgamated.hpp>

#include "fbsde/forward.hpp"
#include "fbsde/solver.hpp"
#include "fbsde/stats.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

using namespace fbsde;

namespace {

// b = 0, sigma = 0.3, marks +1 and -0.5: X is a martingale started at 1
ForwardModel martingale_model() {
    ForwardModel m;
    m.x0 = 1.0;
    m.sigma.value = 0.3;
    m.K_sigma = 0.3;
    return m;
}

JumpMeasure two_atoms() {
    JumpMeasure m;
    m.atoms = {{1.0, 1.0}, {-0.5, 2.0}};
    return m;
}

DriverSpec zero_driver() { return DriverSpec{}; }

struct Fixture {
    NoiseBundle bundle;
    EulerResult forward;
};

Fixture make_fixture(std::size_t n_paths, std::size_t n_intervals, std::uint64_t seed) {
    Fixture fx;
    TimeGrid grid = make_grid(1.0, n_intervals);
    fx.bundle = sample_noise(grid, two_atoms(), n_paths, seed);
    fx.forward = euler_solve(martingale_model(), fx.bundle);
    return fx;
}

double mean_terminal(const std::vector<PathSkeleton>& paths) {
    double s = 0.0;
    for (const auto& p : paths) s += p.values.back();
    return s / static_cast<double>(paths.size());
}

} // namespace

TEST_CASE("zero driver reproduces the terminal mean through the tower of regressions") {
    Fixture fx = make_fixture(20000, 32, 17);
    BsdeSolution sol = lsmc_solve(fx.forward.paths, fx.bundle, zero_driver(), 1e6);

    // every regression carries an intercept, so composing them preserves
    // the sample mean; only the degenerate t = 0 ridge perturbs it
    const double mg = mean_terminal(fx.forward.paths);
    CHECK(std::fabs(sol.y0 - mg) < 1e-6 * (1.0 + std::fabs(mg)));

    // and the martingale property puts that mean at x0
    std::vector<double> xT(fx.forward.paths.size());
    for (std::size_t p = 0; p < xT.size(); ++p) xT[p] = fx.forward.paths[p].values.back();
    MeanStats st = mean_stats(xT);
    CHECK(std::fabs(sol.y0 - 1.0) < 4.0 * st.std_error);
}

TEST_CASE("constant driver adds exactly c times the horizon") {
    Fixture fx = make_fixture(4000, 16, 23);
    DriverSpec d;
    d.f_const = 0.2;
    d.params.k_f = 0.2;
    BsdeSolution sol = lsmc_solve(fx.forward.paths, fx.bundle, d, 1e6);
    const double mg = mean_terminal(fx.forward.paths);
    CHECK(sol.y0 == Catch::Approx(mg + 0.2).margin(1e-6));
}

TEST_CASE("linear y driver compounds discretely toward e^{1/2}") {
    Fixture fx = make_fixture(20000, 64, 29);
    DriverSpec d;
    d.y_coef = 0.5;
    d.params.L_fy = 0.5;
    BsdeSolution sol = lsmc_solve(fx.forward.paths, fx.bundle, d, 1e6);

    // each step multiplies the running mean by (1 + 0.5 dt), so the exact
    // discrete value is mean(X_T) (1 + 0.5/N)^N
    const double mg = mean_terminal(fx.forward.paths);
    const double discrete = mg * std::pow(1.0 + 0.5 / 64.0, 64);
    CHECK(std::fabs(sol.y0 - discrete) < 1e-6 * discrete);
    CHECK(std::fabs(sol.y0 - std::exp(0.5)) < 0.025 * std::exp(0.5));
}

TEST_CASE("integrand fields track the constant volatility and jump coefficients") {
    Fixture fx = make_fixture(40000, 32, 31);
    BsdeSolution sol = lsmc_solve(fx.forward.paths, fx.bundle, zero_driver(), 1e6);

    // Y = X makes the true Z equal sigma and the true U equal the mark
    auto rms = [](const std::vector<std::vector<double>>& rows) {
        double acc = 0.0;
        std::size_t cnt = 0;
        for (const auto& row : rows)
            for (double v : row) {
                acc += v * v;
                ++cnt;
            }
        return std::sqrt(acc / static_cast<double>(cnt));
    };
    CHECK(std::fabs(rms(sol.Z) - 0.3) < 0.10 * 0.3);
    CHECK(std::fabs(rms(sol.U[0]) - 1.0) < 0.20 * 1.0);
    CHECK(std::fabs(rms(sol.U[1]) - 0.5) < 0.20 * 0.5);

    // H aggregates h(U_j) kappa_j lambda_j with h = id and kappa = 1 ^ |mark|;
    // for the true fields that is 1*1*1 + (-0.5)*0.5*2 = 0.5
    double hacc = 0.0;
    std::size_t hcnt = 0;
    for (const auto& row : sol.H)
        for (double v : row) {
            hacc += v;
            ++hcnt;
        }
    CHECK(std::fabs(hacc / static_cast<double>(hcnt) - 0.5) < 0.1);
}

TEST_CASE("picard iteration on a zero driver stops immediately at the plain solution") {
    Fixture fx = make_fixture(5000, 16, 37);
    BsdeSolution plain = lsmc_solve(fx.forward.paths, fx.bundle, zero_driver(), 1e6);
    BsdeSolution pic = picard_solve(fx.forward.paths, fx.bundle, zero_driver(), 1e6);

    CHECK(pic.picard_converged);
    CHECK(pic.picard_iterations == 1);
    REQUIRE_FALSE(pic.picard_residuals.empty());
    CHECK(pic.picard_residuals.back() == 0.0);
    CHECK(pic.y0 == plain.y0);
    CHECK(pic.Y[0] == plain.Y[0]);
    CHECK(pic.Z[5] == plain.Z[5]);
}

TEST_CASE("picard iteration converges on a coupled driver near the plain scheme") {
    Fixture fx = make_fixture(8000, 32, 41);
    DriverSpec d;
    d.y_coef = -0.4;
    d.z_coef = 0.2;
    d.u_coef = 0.1;
    d.params.L_fy = 0.4;
    BsdeSolution plain = lsmc_solve(fx.forward.paths, fx.bundle, d, 1e6);
    BsdeSolution pic = picard_solve(fx.forward.paths, fx.bundle, d, 1e6);

    CHECK(pic.picard_converged);
    REQUIRE(pic.picard_residuals.size() >= 2);
    // contraction: the recorded residuals decrease
    for (std::size_t k = 1; k < pic.picard_residuals.size(); ++k)
        CHECK(pic.picard_residuals[k] < pic.picard_residuals[k - 1]);
    CHECK(std::fabs(pic.y0 - plain.y0) < 0.01 * (1.0 + std::fabs(plain.y0)));
}

TEST_CASE("solution fields do not depend on the worker count") {
    Fixture fx = make_fixture(6000, 16, 43);
    DriverSpec d;
    d.y_coef = 0.3;
    d.params.L_fy = 0.3;
    SolverOptions one, four;
    one.threads = 1;
    four.threads = 4;
    BsdeSolution s1 = lsmc_solve(fx.forward.paths, fx.bundle, d, 1e6, one);
    BsdeSolution s4 = lsmc_solve(fx.forward.paths, fx.bundle, d, 1e6, four);
    CHECK(s1.y0 == s4.y0);
    CHECK(s1.Y[0] == s4.Y[0]);
    CHECK(s1.Z == s4.Z);
    CHECK(s1.U == s4.U);
}

TEST_CASE("truncation level is insensitive once the plateau clears the data") {
    Fixture fx = make_fixture(3000, 16, 47);
    DriverSpec d;
    d.y_coef = 0.2;
    d.z_coef = 0.1;
    d.params.L_fy = 0.2;
    BsdeSolution a = lsmc_solve(fx.forward.paths, fx.bundle, d, 1e6);
    BsdeSolution b = lsmc_solve(fx.forward.paths, fx.bundle, d, 1e12);
    CHECK(a.y0 == b.y0);
}

TEST_CASE("data-driven truncation level on constant paths") {
    // b = 0, sigma = 0, no jumps, x0 = 1: every value is exactly 1, so the
    // required level is max(c_y (1 + 1), a + b, 1) = 2 and M = 3
    ForwardModel m;
    m.x0 = 1.0;
    TimeGrid grid = make_grid(1.0, 8);
    NoiseBundle bundle = sample_noise(grid, JumpMeasure{}, 50, 3);
    EulerResult res = euler_solve(m, bundle);
    BoundConstants k; // a = b = c_y = 1
    CHECK(choose_truncation_level(res.paths, k, 0.0) == Catch::Approx(3.0).margin(1e-12));
    CHECK_THROWS_AS(choose_truncation_level({}, k, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(choose_truncation_level(res.paths, k, -0.5), std::invalid_argument);
}

TEST_CASE("bound verification holds the declared quantile on a mild model") {
    Fixture fx = make_fixture(10000, 16, 53);
    BsdeSolution sol = lsmc_solve(fx.forward.paths, fx.bundle, zero_driver(), 1e6);
    BoundReport rep = verify_bounds(sol, 0.5, {1.0, 0.5}, 0.99);
    CHECK(rep.tau == 0.99);
    CHECK(rep.z_fit.n > 0);
    CHECK(rep.u_fit.n > 0);
    CHECK(rep.n_y > 0);
    // the fits are quantile-calibrated, so violations stay near 1 - tau
    CHECK(rep.z_fit.violation_rate <= 0.02);
    CHECK(rep.u_fit.violation_rate <= 0.02);
    CHECK(rep.y_violation_rate <= 0.02);
    CHECK(rep.c_y > 0.0);

    CHECK_THROWS_AS(verify_bounds(sol, 0.5, {1.0}, 0.99), std::invalid_argument);
}

TEST_CASE("solver input validation") {
    Fixture fx = make_fixture(100, 4, 59);
    SolverOptions empty;
    empty.basis.features.clear();
    CHECK_THROWS_AS(lsmc_solve(fx.forward.paths, fx.bundle, zero_driver(), 1e6, empty),
                    std::invalid_argument);

    PicardOptions popts;
    popts.max_sweeps = 1;
    CHECK_THROWS_AS(picard_solve(fx.forward.paths, fx.bundle, zero_driver(), 1e6, {}, popts),
                    std::invalid_argument);
}
