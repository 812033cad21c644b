#include "catch2/catch_amalgamated.hpp"
#include "fbsde/noise.hpp"
#include "fbsde/stats.hpp"

#include <cmath>
#include <numeric>

using namespace fbsde;

TEST_CASE("uniform grids have exact endpoints and merged extras") {
    TimeGrid g = make_grid(2.0, 8);
    REQUIRE(g.times.size() == 9);
    CHECK(g.times.front() == 0.0);
    CHECK(g.times.back() == 2.0);
    CHECK(g.dt(3) == Catch::Approx(0.25));
    CHECK(g.mesh() == Catch::Approx(0.25));

    TimeGrid h = make_grid(1.0, 4, {0.1, 0.5, 0.1});
    // 0.5 is already an instant, 0.1 enters once
    REQUIRE(h.times.size() == 6);
    CHECK(h.find_instant(0.1, 0.0) == 1);
    CHECK(h.find_instant(0.5, 0.0) == 3);
    CHECK(h.find_instant(0.3, 0.0) == TimeGrid::npos);
    CHECK(h.mesh() == Catch::Approx(0.25));
}

TEST_CASE("grid construction rejects bad input with every violation named") {
    CHECK_THROWS_AS(make_grid(0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(1.0, 4, {-0.1}), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(1.0, 4, {1.5}), std::invalid_argument);
}

TEST_CASE("jump counts and times follow the measure") {
    TimeGrid grid = make_grid(2.0, 16);
    JumpMeasure meas;
    meas.atoms = {{0.5, 1.5}, {-1.0, 0.5}};
    const std::size_t n = 4000;
    NoiseBundle b = sample_noise(grid, meas, n, 17);
    REQUIRE(b.paths.size() == n);

    double total = 0.0;
    double atom0 = 0.0;
    for (const auto& pn : b.paths) {
        total += static_cast<double>(pn.jumps.size());
        double prev = -1.0;
        for (const auto& j : pn.jumps) {
            CHECK(j.time > 0.0);
            CHECK(j.time <= grid.T);
            CHECK(j.time >= prev);
            prev = j.time;
            atom0 += j.atom == 0 ? 1.0 : 0.0;
            // the refined grid contains the jump instant exactly
            CHECK(std::binary_search(pn.times->begin(), pn.times->end(), j.time));
        }
    }
    const double mean_total = meas.total_intensity() * grid.T; // 4 per path
    CHECK(std::fabs(total / n - mean_total) < 4.5 * std::sqrt(mean_total / n));
    CHECK(std::fabs(atom0 / n - 3.0) < 4.5 * std::sqrt(3.0 / n));
}

TEST_CASE("base instants keep their identity inside the refined grid") {
    TimeGrid grid = make_grid(1.0, 8);
    JumpMeasure meas;
    meas.atoms = {{1.0, 3.0}};
    NoiseBundle b = sample_noise(grid, meas, 200, 3);
    for (const auto& pn : b.paths) {
        REQUIRE(pn.base_index.size() == grid.times.size());
        for (std::size_t i = 0; i < grid.times.size(); ++i)
            CHECK((*pn.times)[pn.base_index[i]] == grid.times[i]);
        REQUIRE(pn.dw.size() == pn.times->size() - 1);
    }
}

TEST_CASE("brownian terminal values pass a chi-square uniformity test") {
    TimeGrid grid = make_grid(1.0, 32);
    JumpMeasure meas; // no jumps
    const std::size_t n = 20000;
    NoiseBundle b = sample_noise(grid, meas, n, 23);

    const int bins = 20;
    std::vector<double> count(bins, 0.0);
    for (const auto& pn : b.paths) {
        double w = std::accumulate(pn.dw.begin(), pn.dw.end(), 0.0);
        double u = 0.5 * std::erfc(-w / std::sqrt(2.0)); // W_T ~ N(0,1) for T=1
        int k = std::min(bins - 1, static_cast<int>(u * bins));
        count[k] += 1.0;
    }
    double expect = static_cast<double>(n) / bins;
    double chi2 = 0.0;
    for (double c : count) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < chi_square_quantile(0.999, bins - 1));
}

TEST_CASE("coupled fields are independent until mixed") {
    TimeGrid grid = make_grid(1.0, 16);
    JumpMeasure meas;
    const std::size_t n = 20000;
    NoiseBundle b = sample_noise(grid, meas, n, 5, true);

    double c12 = 0.0, v1 = 0.0, v2 = 0.0;
    for (const auto& pn : b.paths) {
        double w1 = std::accumulate(pn.dw.begin(), pn.dw.end(), 0.0);
        double w2 = std::accumulate(pn.dw2.begin(), pn.dw2.end(), 0.0);
        c12 += w1 * w2;
        v1 += w1 * w1;
        v2 += w2 * w2;
    }
    CHECK(std::fabs(c12 / n) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(v1 / n == Catch::Approx(1.0).margin(0.05));
    CHECK(v2 / n == Catch::Approx(1.0).margin(0.05));

    const double phi = 0.5;
    auto mixed = couple_brownian(b, phi);
    double cm = 0.0, vm = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        double w1 = std::accumulate(b.paths[p].dw.begin(), b.paths[p].dw.end(), 0.0);
        double wm = std::accumulate(mixed[p].begin(), mixed[p].end(), 0.0);
        cm += w1 * wm;
        vm += wm * wm;
    }
    CHECK(vm / n == Catch::Approx(1.0).margin(0.05));
    CHECK(cm / n == Catch::Approx(std::sqrt(1.0 - phi * phi)).margin(0.05));
}

TEST_CASE("couple_brownian rejects misuse") {
    TimeGrid grid = make_grid(1.0, 4);
    JumpMeasure meas;
    NoiseBundle plain = sample_noise(grid, meas, 2, 1, false);
    CHECK_THROWS_AS(couple_brownian(plain, 0.5), std::invalid_argument);
    NoiseBundle coup = sample_noise(grid, meas, 2, 1, true);
    CHECK_THROWS_AS(couple_brownian(coup, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(couple_brownian(coup, 1.5), std::invalid_argument);
}

TEST_CASE("restricting to a coarser grid preserves increments and jumps") {
    TimeGrid fine = make_grid(1.0, 64);
    TimeGrid coarse = make_grid(1.0, 16);
    JumpMeasure meas;
    meas.atoms = {{0.8, 2.0}};
    NoiseBundle bf = sample_noise(fine, meas, 500, 29);
    NoiseBundle bc = restrict_bundle(bf, coarse);

    REQUIRE(bc.paths.size() == bf.paths.size());
    for (std::size_t p = 0; p < bc.paths.size(); ++p) {
        const auto& fp = bf.paths[p];
        const auto& cp = bc.paths[p];
        REQUIRE(cp.jumps.size() == fp.jumps.size());
        for (std::size_t j = 0; j < cp.jumps.size(); ++j) {
            CHECK(cp.jumps[j].time == fp.jumps[j].time);
            CHECK(cp.jumps[j].atom == fp.jumps[j].atom);
        }
        double sf = std::accumulate(fp.dw.begin(), fp.dw.end(), 0.0);
        double sc = std::accumulate(cp.dw.begin(), cp.dw.end(), 0.0);
        CHECK(sf == Catch::Approx(sc).margin(1e-12));

        // each coarse increment is the sum of the matching fine ones
        const auto& ct = *cp.times;
        const auto& ft = *fp.times;
        for (std::size_t i = 0; i + 1 < ct.size(); ++i) {
            double want = 0.0;
            for (std::size_t k = 0; k + 1 < ft.size(); ++k)
                if (ft[k] >= ct[i] && ft[k + 1] <= ct[i + 1]) want += fp.dw[k];
            CHECK(cp.dw[i] == Catch::Approx(want).margin(1e-13));
        }
    }
}

TEST_CASE("restrict_bundle demands nested grids") {
    TimeGrid fine = make_grid(1.0, 64);
    TimeGrid other = make_grid(1.0, 48); // instants not a subset
    JumpMeasure meas;
    NoiseBundle bf = sample_noise(fine, meas, 2, 1);
    CHECK_THROWS_AS(restrict_bundle(bf, other), std::invalid_argument);
}

TEST_CASE("sampling validates its inputs") {
    TimeGrid grid = make_grid(1.0, 4);
    JumpMeasure bad;
    bad.atoms = {{0.0, 1.0}}; // zero mark
    CHECK_THROWS_AS(sample_noise(grid, bad, 10, 1), std::invalid_argument);
    JumpMeasure neg;
    neg.atoms = {{1.0, -2.0}};
    CHECK_THROWS_AS(sample_noise(grid, neg, 10, 1), std::invalid_argument);
    JumpMeasure ok;
    CHECK_THROWS_AS(sample_noise(grid, ok, 0, 1), std::invalid_argument);
}
