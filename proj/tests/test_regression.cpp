#include <catch2/catch_amalgamated.hpp>

#include "fbsde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace fbsde;

TEST_CASE("normal equations reproduce hand-solved systems") {
    // [[2,1],[1,2]] w = [3,3] has w = [1,1]
    NormalEquations eq2({2.0, 1.0, 1.0, 2.0}, 2);
    auto w2 = eq2.solve({3.0, 3.0});
    CHECK(w2[0] == Catch::Approx(1.0).margin(1e-14));
    CHECK(w2[1] == Catch::Approx(1.0).margin(1e-14));
    CHECK_FALSE(eq2.ridged());
    // eigenvalues are 1 and 3
    CHECK(eq2.condition() == Catch::Approx(3.0).margin(1e-10));

    // rhs built from a known coefficient vector round-trips through solve
    std::vector<double> a = {4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0};
    std::vector<double> w = {1.0, 2.0, 3.0};
    std::vector<double> rhs(3, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) rhs[i] += a[i * 3 + j] * w[j];
    NormalEquations eq3(a, 3);
    auto got = eq3.solve(rhs);
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == Catch::Approx(w[i]).margin(1e-12));
}

TEST_CASE("one factor serves many right-hand sides") {
    NormalEquations eq({3.0, 0.0, 0.0, 5.0}, 2);
    auto u = eq.solve({6.0, 10.0});
    auto v = eq.solve({3.0, 0.0});
    CHECK(u[0] == Catch::Approx(2.0));
    CHECK(u[1] == Catch::Approx(2.0));
    CHECK(v[0] == Catch::Approx(1.0));
    CHECK(v[1] == Catch::Approx(0.0));
}

TEST_CASE("identity gram is perfectly conditioned") {
    NormalEquations eq({1.0, 0.0, 0.0, 1.0}, 2);
    CHECK(eq.condition() == Catch::Approx(1.0));
    CHECK_FALSE(eq.ridged());
    auto w = eq.solve({0.25, -4.0});
    CHECK(w[0] == 0.25);
    CHECK(w[1] == -4.0);
}

TEST_CASE("rank deficiency triggers the ridge and still solves") {
    // duplicated feature: gram [[1,1],[1,1]] is singular
    NormalEquations eq({1.0, 1.0, 1.0, 1.0}, 2, 1e-8);
    CHECK(eq.ridged());
    CHECK(eq.condition() > 1e12);
    auto w = eq.solve({2.0, 2.0});
    CHECK(std::isfinite(w[0]));
    CHECK(std::isfinite(w[1]));
    // ridge splits the weight evenly between the clones
    CHECK(w[0] == Catch::Approx(w[1]).margin(1e-10));
    CHECK(w[0] + w[1] == Catch::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("size mismatches are rejected") {
    CHECK_THROWS_AS(NormalEquations({1.0, 0.0, 1.0}, 2), std::invalid_argument);
    NormalEquations eq({1.0, 0.0, 0.0, 1.0}, 2);
    CHECK_THROWS_AS(eq.solve({1.0}), std::invalid_argument);
}

TEST_CASE("jacobi sweep recovers the spectrum of small symmetric matrices") {
    auto ev = detail::jacobi_eigenvalues({3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0}, 3);
    std::sort(ev.begin(), ev.end());
    CHECK(ev[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(ev[1] == Catch::Approx(2.0).margin(1e-12));
    CHECK(ev[2] == Catch::Approx(3.0).margin(1e-12));

    // [[2,1],[1,2]] again, now through the raw sweep
    auto ev2 = detail::jacobi_eigenvalues({2.0, 1.0, 1.0, 2.0}, 2);
    std::sort(ev2.begin(), ev2.end());
    CHECK(ev2[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(ev2[1] == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("basis features round-trip through their names") {
    RegressionBasis basis = RegressionBasis::defaults();
    CHECK(basis.size() == 5);
    for (auto f : basis.features) CHECK(feature_from_name(feature_name(f)) == f);
    CHECK_THROWS_AS(feature_from_name("cubic"), std::invalid_argument);
}
