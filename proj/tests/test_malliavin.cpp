#include <catch2/catch_amalgamated.hpp>

#include "fbsde/malliavin.hpp"

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

using namespace fbsde;

namespace {

ForwardModel drifted_model() {
    ForwardModel m;
    m.x0 = 1.0;
    m.drift.b0 = 0.1;
    m.drift.coef = -0.5;
    m.drift.functional = make_functional(FunctionalKind::point_eval);
    m.drift.functional.at = 1.0;
    m.sigma.value = 0.25;
    m.K_b = 0.1;
    m.L_b = 0.5;
    m.K_sigma = 0.25;
    return m;
}

JumpMeasure two_atoms() {
    JumpMeasure m;
    m.atoms = {{0.8, 0.6}, {-0.4, 0.9}};
    return m;
}

} // namespace

TEST_CASE("shifting a path adds the mark from the shift time on") {
    PathSkeleton p =
        make_skeleton({0.0, 0.25, 0.5, 0.75, 1.0}, {1.0, 1.5, 2.0, 0.5, 0.5}, {{0.5, 1.0}});

    PathSkeleton sh = shift_path(p, 0.5, 0.7);
    CHECK(value_at(sh, 0.25) == 1.5);
    CHECK(value_at(sh, 0.5) == Catch::Approx(2.7));
    CHECK(value_at(sh, 1.0) == Catch::Approx(1.2));
    // ledger gains exactly one entry at the shift time
    CHECK(sh.jumps.size() == p.jumps.size() + 1);
    double at_half = 0.0;
    for (const auto& j : sh.jumps)
        if (j.time == 0.5) at_half += j.size;
    CHECK(at_half == Catch::Approx(1.0 + 0.7));

    // a shift time off the grid inserts a new instant
    PathSkeleton off = shift_path(p, 0.3, 1.0);
    CHECK(off.times->size() == p.times->size() + 1);
    CHECK(value_at(off, 0.3) == Catch::Approx(1.5 + 1.0));
    CHECK(left_limit_at(off, 0.3) == Catch::Approx(1.5));

    CHECK_THROWS_AS(shift_path(p, 1.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(shift_path(p, -0.1, 1.0), std::invalid_argument);
}

TEST_CASE("jump derivative of catalog functionals by direct differencing") {
    PathSkeleton p =
        make_skeleton({0.0, 0.25, 0.5, 0.75, 1.0}, {1.0, 1.5, 2.0, 0.5, 0.5}, {{0.5, 1.0}});

    PathFunctional term = make_functional(FunctionalKind::terminal_point);
    CHECK(jump_derivative_functional(term, p, 0.25, 0.7) == Catch::Approx(0.7));

    // sup over the shifted path: values become {1, 2.2, 2.7, 1.2, 1.2}
    PathFunctional sup = make_functional(FunctionalKind::sup_norm);
    CHECK(jump_derivative_functional(sup, p, 0.25, 0.7) == Catch::Approx(2.7 - 2.0));

    // a shift after the running maximum leaves the sup untouched
    CHECK(jump_derivative_functional(sup, p, 0.75, 0.1) == Catch::Approx(0.0));
}

TEST_CASE("solution derivative is adapted and bounded by the flow estimate") {
    ForwardModel m = drifted_model();
    JumpMeasure meas = two_atoms();
    TimeGrid grid = make_grid(1.0, 16);
    NoiseBundle bundle = sample_noise(grid, meas, 2000, 77);

    DriverSpec d;
    d.y_coef = -0.2;
    d.params.L_fy = 0.2;

    const double s = 0.5;
    SolutionDerivative der = solution_jump_derivative(m, d, 1e6, bundle, s, 0);
    CHECK(der.mark == 0.8);

    const double kappa = 0.8; // rho is the mark itself
    const double mesh = 1.0 / 16.0;
    for (std::size_t i = 0; i < der.t.size(); ++i) {
        for (std::size_t q = 0; q < bundle.paths.size(); ++q) {
            if (der.t[i] < s) {
                // adapted fields are exactly zero before the shift
                CHECK(der.dX[i][q] == 0.0);
                CHECK(der.dY[i][q] == 0.0);
            } else {
                double cap = kappa * std::exp(m.L_b * (der.t[i] - s)) * (1.0 + 5.0 * mesh);
                CHECK(std::fabs(der.dX[i][q]) <= cap);
            }
        }
    }

    // at the shift instant itself the derivative is exactly rho
    std::size_t is = grid.find_instant(s, 0.0);
    REQUIRE(is != TimeGrid::npos);
    for (std::size_t q = 0; q < bundle.paths.size(); ++q)
        CHECK(der.dX[is][q] == Catch::Approx(0.8).margin(1e-12));

    // terminal identity: dY_N is the difference of terminal data
    const std::size_t N = der.t.size() - 1;
    for (std::size_t q = 0; q < 50; ++q) {
        double gs = der.shifted.Y[N][q];
        double gb = der.base.Y[N][q];
        CHECK(der.dY[N][q] == Catch::Approx(gs - gb).margin(1e-14));
    }

    CHECK_THROWS_AS(solution_jump_derivative(m, d, 1e6, bundle, s, 7), std::invalid_argument);
}

TEST_CASE("first chaos quotient closed form and limits") {
    CHECK(first_chaos_quotient(1.0) == Catch::Approx(std::sqrt(2.0)).margin(1e-15));
    CHECK(first_chaos_quotient(0.5) == Catch::Approx(1.0352761804100830).margin(1e-13));
    // decreasing toward 1 as phi -> 0
    double prev = first_chaos_quotient(1.0);
    for (double phi : {0.5, 0.25, 0.125, 0.01}) {
        double v = first_chaos_quotient(phi);
        CHECK(v < prev);
        CHECK(v > 1.0);
        prev = v;
    }
    CHECK_THROWS_AS(first_chaos_quotient(0.0), std::invalid_argument);
    CHECK_THROWS_AS(first_chaos_quotient(1.5), std::invalid_argument);
}

TEST_CASE("gaussian quotient statistic on hand samples") {
    // differences all equal to d: value = |d| / phi with zero variance
    std::vector<double> base = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> mixed = {1.5, 2.5, 3.5, 4.5};
    QuotientStat q = gaussian_quotient(base, mixed, 0.5);
    CHECK(q.value == Catch::Approx(1.0));
    CHECK(q.std_error == Catch::Approx(0.0).margin(1e-15));
    CHECK(q.n == 4);

    CHECK_THROWS_AS(gaussian_quotient(base, {1.0}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_quotient(base, mixed, 0.0), std::invalid_argument);
}

TEST_CASE("quotient curve of a Brownian terminal functional matches first chaos") {
    // X = x0 + sigma W and F = X_T scaled to unit variance lives in the
    // first chaos, where the quotient has a closed form
    ForwardModel m;
    m.x0 = 0.0;
    m.sigma.value = 1.0;
    m.K_sigma = 1.0;
    PathFunctional term = make_functional(FunctionalKind::terminal_point);
    TimeGrid grid = make_grid(1.0, 32);
    std::vector<double> phis = {1.0, 0.5, 0.25};
    auto curve = quotient_curve(m, term, grid, JumpMeasure{}, 20000, 2026, phis);

    REQUIRE(curve.size() == 3);
    for (std::size_t k = 0; k < curve.size(); ++k) {
        double expect = first_chaos_quotient(phis[k]);
        CHECK(std::fabs(curve[k].value - expect) < 3.0 * curve[k].std_error + 5e-3);
        if (k > 0) CHECK(curve[k].value < curve[k - 1].value + 3.0 * curve[k].std_error);
    }

    CHECK_THROWS_AS(quotient_curve(m, term, grid, JumpMeasure{}, 100, 1, {0.5, 2.0}),
                    std::invalid_argument);
}
