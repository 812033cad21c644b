#include <catch2/catch_amalgamated.hpp>

#include "fbsde/inequalities.hpp"

#include <cmath>
#include <vector>

using namespace fbsde;

TEST_CASE("linear growth bound on a frozen instance") {
    // sup_x in {1,2,3,4}, H == 4, A_T = 0, p = 1/2:
    // rhs = sqrt(4) / (1 - 1/2) = 4 and lhs = mean sqrt = 1.7539...
    GronwallInstance inst;
    inst.p = 0.5;
    inst.sup_x = {1.0, 2.0, 3.0, 4.0};
    inst.h_T = {4.0, 4.0, 4.0, 4.0};
    inst.a_T = 0.0;
    InequalityReport rep = gronwall_check(inst);
    CHECK(rep.rhs == Catch::Approx(4.0).margin(1e-14));
    double lhs = (1.0 + std::sqrt(2.0) + std::sqrt(3.0) + 2.0) / 4.0;
    CHECK(rep.lhs == Catch::Approx(lhs).margin(1e-14));
    CHECK(rep.pass);
    CHECK(rep.margin > 0.0);
    CHECK(rep.n == 4);

    // a_T enters the right side through exp(p/(1-p) a_T)
    inst.a_T = 1.0;
    CHECK(gronwall_check(inst).rhs == Catch::Approx(4.0 * std::exp(1.0)).margin(1e-12));
}

TEST_CASE("linear growth bound scales homogeneously") {
    GronwallInstance inst;
    inst.p = 0.25;
    inst.sup_x = {1.0, 5.0, 2.0};
    inst.h_T = {3.0, 3.0, 3.0};
    InequalityReport base = gronwall_check(inst);

    // scaling sup and H by the same factor scales both sides by factor^p
    const double c = 16.0;
    for (auto& v : inst.sup_x) v *= c;
    for (auto& v : inst.h_T) v *= c;
    InequalityReport scaled = gronwall_check(inst);
    CHECK(scaled.rhs == Catch::Approx(base.rhs * std::pow(c, 0.25)).margin(1e-12));
    CHECK(scaled.lhs == Catch::Approx(base.lhs * std::pow(c, 0.25)).margin(1e-12));
}

TEST_CASE("instance validation rejects malformed inputs") {
    GronwallInstance inst;
    inst.sup_x = {1.0};
    inst.h_T = {1.0};

    GronwallInstance bad_p = inst;
    bad_p.p = 1.0;
    CHECK_THROWS_AS(gronwall_check(bad_p), std::invalid_argument);
    bad_p.p = 0.0;
    CHECK_THROWS_AS(gronwall_check(bad_p), std::invalid_argument);

    GronwallInstance bad_align = inst;
    bad_align.h_T = {1.0, 2.0};
    CHECK_THROWS_AS(gronwall_check(bad_align), std::invalid_argument);

    GronwallInstance bad_sup = inst;
    bad_sup.sup_x = {-1.0};
    CHECK_THROWS_AS(gronwall_check(bad_sup), std::invalid_argument);

    GronwallInstance bad_a = inst;
    bad_a.a_T = -0.5;
    CHECK_THROWS_AS(gronwall_check(bad_a), std::invalid_argument);

    // each check insists on its own growth case
    GronwallInstance wrong_eta = inst;
    wrong_eta.eta.kind = EtaSpec::Kind::xlogx;
    CHECK_THROWS_AS(gronwall_check(wrong_eta), std::invalid_argument);
    GronwallInstance wrong_eta2 = inst;
    CHECK_THROWS_AS(bihari_check(wrong_eta2), std::invalid_argument);
}

TEST_CASE("G pair inverts itself across the domain") {
    const double r = std::exp(1.0);
    for (double y : {r * 1.01, 3.0, 10.0, 100.0, 1e4, 1e6}) {
        double w = bihari_G(y, r);
        CHECK(std::fabs(bihari_Ginv(w, r) - y) / y < 1e-12);
    }
    // the subtraction identity used by the per-path left side
    for (double y : {5.0, 50.0, 500.0})
        for (double c : {0.1, 0.5, 1.0}) {
            double direct = bihari_Ginv(bihari_G(y, r) - c, r);
            CHECK(std::fabs(direct - std::pow(y, std::exp(-c))) / direct < 1e-12);
        }
    CHECK_THROWS_AS(bihari_G(0.5, r), std::invalid_argument);
    CHECK_THROWS_AS(bihari_G(2.0, 1.0), std::invalid_argument);
}

TEST_CASE("x log x growth bound on a frozen instance") {
    // sup == e^2, a_T = (1-p) log 2 with p = 1/2 gives per-path left
    // values (e^2)^{p exp(-log 2)} = e^{1/2}
    GronwallInstance inst;
    inst.eta.kind = EtaSpec::Kind::xlogx;
    inst.eta.r = std::exp(1.0);
    inst.p = 0.5;
    inst.sup_x = {std::exp(2.0), std::exp(2.0)};
    inst.h_T = {4.0, 4.0};
    inst.a_T = 0.5 * std::log(2.0);
    InequalityReport rep = bihari_check(inst);
    CHECK(rep.lhs == Catch::Approx(std::exp(0.5)).margin(1e-12));
    CHECK(rep.rhs == Catch::Approx(4.0).margin(1e-14));
    CHECK(rep.pass);

    // sups at or below the domain floor are a usage error
    GronwallInstance low = inst;
    low.sup_x = {2.0, std::exp(2.0)};
    CHECK_THROWS_AS(bihari_check(low), std::invalid_argument);
}

TEST_CASE("forward runs feed both bounds and they hold") {
    ForwardModel m;
    m.x0 = 1.0;
    m.drift.b0 = 0.05;
    m.drift.coef = -0.4;
    m.drift.functional = make_functional(FunctionalKind::point_eval);
    m.drift.functional.at = 1.0;
    m.sigma.value = 0.3;
    m.K_b = 0.05;
    m.L_b = 0.4;
    m.K_sigma = 0.3;
    JumpMeasure meas;
    meas.atoms = {{0.3, 1.0}, {-0.2, 2.0}};

    TimeGrid grid = make_grid(1.0, 32);
    NoiseBundle bundle = sample_noise(grid, meas, 8000, 404);
    EulerResult res = euler_solve(m, bundle);

    for (double p : {0.25, 0.5, 0.75}) {
        GronwallInstance inst = gronwall_from_forward(m, res, grid, p);
        CHECK(inst.a_T == Catch::Approx(0.4));
        // H majorizes |x0| plus drift mass plus the martingale sup
        for (std::size_t q = 0; q < 20; ++q)
            CHECK(inst.h_T[q] ==
                  Catch::Approx(1.0 + 0.05 + res.mart_sup[q]).margin(1e-12));
        InequalityReport rep = gronwall_check(inst);
        INFO("p = " << p << " lhs " << rep.lhs << " rhs " << rep.rhs);
        CHECK(rep.pass);
    }

    const double c = 1.0;
    GronwallInstance binst = bihari_from_forward(m, meas, res, grid, c, 0.5);
    CHECK(binst.a_T == Catch::Approx(2.0 * exponential_growth_rate(m, meas, c)));
    for (double v : binst.h_T) CHECK(v == Catch::Approx(2.0 + std::exp(1.0)).margin(1e-12));
    InequalityReport brep = bihari_check(binst);
    INFO("bihari lhs " << brep.lhs << " rhs " << brep.rhs);
    CHECK(brep.pass);
}

TEST_CASE("exponential growth rate is the maximum of its two regimes") {
    ForwardModel m;
    m.K_b = 0.05;
    m.L_b = 0.4;
    m.K_sigma = 0.3;
    JumpMeasure meas;
    meas.atoms = {{0.3, 1.0}};
    const double c = 1.0;
    double jumps = (std::exp(0.3) - 1.0 - 0.3) * 1.0;
    double direct = 0.05 + 0.5 * 0.09 + jumps;
    CHECK(exponential_growth_rate(m, meas, c) ==
          Catch::Approx(std::max(direct, 0.4)).margin(1e-14));

    // an ample Lipschitz constant flips the max to the c L_b branch
    m.L_b = 5.0;
    CHECK(exponential_growth_rate(m, meas, c) == Catch::Approx(5.0).margin(1e-14));
}

TEST_CASE("bound iteration fixed point has a closed form at exponent 1/2") {
    // a = 4 (1 + sqrt a) with C = 1 solves to a = 12 + 8 sqrt 2
    const double closed = 12.0 + 8.0 * std::sqrt(2.0);
    for (double a0 : {1.0, 10.0, 1e6}) {
        FixedPointProblem pr;
        pr.C = 1.0;
        pr.exponent = 0.5;
        pr.a0 = a0;
        FixedPointResult res = fixed_point(pr);
        CHECK(res.converged);
        CHECK(res.iterations <= 200);
        CHECK(std::fabs(res.value - closed) < 1e-9);
        CHECK(res.residual < 1e-9);
    }

    // exponent 0 collapses to one evaluation of the constant map
    FixedPointProblem flat;
    flat.C = 2.0;
    flat.exponent = 0.0;
    flat.a0 = 50.0;
    CHECK(fixed_point(flat).value == Catch::Approx(18.0).margin(1e-10));

    // the limit grows with C
    double prev = 0.0;
    for (double C : {0.0, 0.5, 1.0, 2.0}) {
        FixedPointProblem pr;
        pr.C = C;
        pr.exponent = 0.5;
        FixedPointResult res = fixed_point(pr);
        CHECK(res.value > prev);
        prev = res.value;
    }

    FixedPointProblem bad;
    bad.exponent = 1.0;
    CHECK_THROWS_AS(fixed_point(bad), std::invalid_argument);
    bad.exponent = 0.5;
    bad.a0 = 0.5;
    CHECK_THROWS_AS(fixed_point(bad), std::invalid_argument);

    FixedPointProblem hostile;
    hostile.C = 1.0;
    hostile.exponent = 0.5;
    hostile.tol = 1e-30; // below reachable double resolution
    hostile.max_iter = 5;
    CHECK_THROWS_AS(fixed_point(hostile), std::runtime_error);
}

TEST_CASE("two-term stability bound and its integer minimizer") {
    // C = 1, dxi2 = e^{-10}, df2 = 0, expX = 1: rhs(n) = e^{n-10} + e^{-n},
    // symmetric around 5, so the smallest minimizer is n = 5
    const double C = 1.0, dxi2 = std::exp(-10.0), df2 = 0.0, expX = 1.0;
    CHECK(apriori_rhs(5, C, dxi2, df2, expX) ==
          Catch::Approx(std::exp(-5.0) + std::exp(-5.0)).margin(1e-14));
    long n_star = apriori_minimize(C, dxi2, df2, expX, 0, 40);
    CHECK(n_star == 5);
    // neighbors are worse or equal
    double at = apriori_rhs(n_star, C, dxi2, df2, expX);
    CHECK(apriori_rhs(n_star - 1, C, dxi2, df2, expX) >= at);
    CHECK(apriori_rhs(n_star + 1, C, dxi2, df2, expX) >= at);

    CHECK_THROWS_AS(apriori_rhs(1, -1.0, 0.0, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(apriori_minimize(1.0, 0.0, 0.0, 1.0, 5, 4), std::invalid_argument);
}
