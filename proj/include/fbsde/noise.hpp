#pragma once

// Finite-activity Levy noise on a time grid: per path, a Brownian
// increment per refined interval (base grid with that path's jump times
// inserted), the jump ledger itself, and optionally an independent second
// Brownian field for coupled (correlated-resample) diagnostics.

#include "fbsde/parallel.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

struct JumpAtom {
    double mark = 0.0;      // v_j, nonzero
    double intensity = 0.0; // lambda_j > 0
};

struct JumpMeasure {
    std::vector<JumpAtom> atoms; // empty measure = driftless diffusion only

    double total_intensity() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.intensity;
        return s;
    }
};

inline void validate_measure(const JumpMeasure& m) {
    std::string bad;
    for (std::size_t j = 0; j < m.atoms.size(); ++j) {
        const auto& a = m.atoms[j];
        if (!std::isfinite(a.mark) || a.mark == 0.0)
            bad += " atom " + std::to_string(j) + ": mark must be finite and nonzero;";
        if (!std::isfinite(a.intensity) || a.intensity <= 0.0)
            bad += " atom " + std::to_string(j) + ": intensity must be finite and positive;";
    }
    if (!bad.empty()) throw std::invalid_argument("validate_measure:" + bad);
}

// kappa(v) = 1 ^ |v|, the weight in the jump aggregate H
inline double jump_weight(double mark) { return std::min(1.0, std::fabs(mark)); }

struct JumpEvent {
    double time = 0.0;
    std::uint32_t atom = 0;
};

struct PathNoise {
    // refined instants for this path: base grid plus its jump times
    std::shared_ptr<const std::vector<double>> times;
    std::vector<double> dw;                  // per refined interval
    std::vector<double> dw2;                 // coupled copy, empty unless sampled
    std::vector<JumpEvent> jumps;            // sorted by (time, atom)
    std::vector<std::uint32_t> base_index;   // base grid instant -> refined index
};

struct NoiseBundle {
    TimeGrid grid;
    JumpMeasure measure;
    std::uint64_t seed = 0;
    bool coupled = false;
    std::vector<PathNoise> paths;
};

namespace detail {

// Counter layout inside the per-(seed,path) streams. Counts use a stride
// of 4096 chunks per atom, times use (atom << 32) + k.
constexpr std::uint64_t kCountStride = 4096;

inline PathNoise sample_path_noise(const TimeGrid& grid, const JumpMeasure& measure,
                                   std::uint64_t seed, std::uint64_t path, bool coupled,
                                   const std::shared_ptr<const std::vector<double>>& base_times) {
    PathNoise pn;

    // jump times first; they decide the refined grid
    CounterStream counts(seed, path, StreamRole::jump_count);
    CounterStream jtimes(seed, path, StreamRole::jump_time);
    for (std::uint32_t a = 0; a < measure.atoms.size(); ++a) {
        const double mean = measure.atoms[a].intensity * grid.T;
        std::uint32_t k = poisson_draw(counts, a * kCountStride, mean);
        for (std::uint32_t i = 0; i < k; ++i) {
            double u = jtimes.uniform((static_cast<std::uint64_t>(a) << 32) + i);
            pn.jumps.push_back({u * grid.T, a});
        }
    }
    std::sort(pn.jumps.begin(), pn.jumps.end(), [](const JumpEvent& l, const JumpEvent& r) {
        return l.time != r.time ? l.time < r.time : l.atom < r.atom;
    });

    if (pn.jumps.empty()) {
        pn.times = base_times;
    } else {
        auto refined = std::make_shared<std::vector<double>>(grid.times);
        refined->reserve(grid.times.size() + pn.jumps.size());
        for (const auto& j : pn.jumps) refined->push_back(j.time);
        std::sort(refined->begin(), refined->end());
        refined->erase(std::unique(refined->begin(), refined->end()), refined->end());
        pn.times = std::move(refined);
    }

    pn.base_index.resize(grid.times.size());
    {
        const auto& rt = *pn.times;
        std::size_t k = 0;
        for (std::size_t i = 0; i < grid.times.size(); ++i) {
            while (rt[k] != grid.times[i]) ++k;
            pn.base_index[i] = static_cast<std::uint32_t>(k);
        }
    }

    const std::size_t m = pn.times->size() - 1;
    CounterStream bw(seed, path, StreamRole::brownian);
    pn.dw.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        double dt = (*pn.times)[k + 1] - (*pn.times)[k];
        pn.dw[k] = std::sqrt(dt) * bw.normal(k);
    }
    if (coupled) {
        CounterStream bw2(seed, path, StreamRole::brownian_coupled);
        pn.dw2.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            double dt = (*pn.times)[k + 1] - (*pn.times)[k];
            pn.dw2[k] = std::sqrt(dt) * bw2.normal(k);
        }
    }
    return pn;
}

} // namespace detail

inline NoiseBundle sample_noise(const TimeGrid& grid, const JumpMeasure& measure,
                                std::size_t n_paths, std::uint64_t seed, bool coupled = false,
                                int threads = 1) {
    if (grid.times.size() < 2) throw std::invalid_argument("sample_noise: grid needs >= 2 instants");
    if (n_paths == 0) throw std::invalid_argument("sample_noise: n_paths must be positive");
    validate_measure(measure);
    for (const auto& a : measure.atoms)
        if (a.intensity * grid.T > 20.0 * static_cast<double>(detail::kCountStride))
            throw std::invalid_argument("sample_noise: atom intensity*T beyond supported range");

    NoiseBundle b;
    b.grid = grid;
    b.measure = measure;
    b.seed = seed;
    b.coupled = coupled;
    b.paths.resize(n_paths);
    auto base_times = std::make_shared<const std::vector<double>>(grid.times);
    for_each_chunk(n_paths, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p)
            b.paths[p] = detail::sample_path_noise(grid, measure, seed, p, coupled, base_times);
    });
    return b;
}

// W^phi = sqrt(1-phi^2) W + phi W', interval increments per path. The
// independent copy must have been sampled (coupled = true).
inline std::vector<std::vector<double>> couple_brownian(const NoiseBundle& b, double phi) {
    if (!b.coupled) throw std::invalid_argument("couple_brownian: bundle has no coupled field");
    if (!(phi > 0.0 && phi <= 1.0)) throw std::invalid_argument("couple_brownian: phi must lie in (0,1]");
    const double c1 = std::sqrt(1.0 - phi * phi);
    std::vector<std::vector<double>> out(b.paths.size());
    for (std::size_t p = 0; p < b.paths.size(); ++p) {
        const auto& pn = b.paths[p];
        out[p].resize(pn.dw.size());
        for (std::size_t k = 0; k < pn.dw.size(); ++k) out[p][k] = c1 * pn.dw[k] + phi * pn.dw2[k];
    }
    return out;
}

// Restrict a bundle to a coarser base grid whose instants are a subset of
// the fine one. Brownian increments are summed within coarse intervals and
// the jump ledger is kept, which gives common-random-number coupling for
// mesh-refinement comparisons.
inline NoiseBundle restrict_bundle(const NoiseBundle& fine, const TimeGrid& coarse) {
    for (double t : coarse.times)
        if (fine.grid.find_instant(t, 0.0) == TimeGrid::npos)
            throw std::invalid_argument("restrict_bundle: coarse instant " + std::to_string(t) +
                                        " not on the fine grid");
    NoiseBundle out;
    out.grid = coarse;
    out.measure = fine.measure;
    out.seed = fine.seed;
    out.coupled = fine.coupled;
    out.paths.resize(fine.paths.size());
    auto base_times = std::make_shared<const std::vector<double>>(coarse.times);

    for (std::size_t p = 0; p < fine.paths.size(); ++p) {
        const auto& fp = fine.paths[p];
        PathNoise cp;
        cp.jumps = fp.jumps;
        if (cp.jumps.empty()) {
            cp.times = base_times;
        } else {
            auto refined = std::make_shared<std::vector<double>>(coarse.times);
            for (const auto& j : cp.jumps) refined->push_back(j.time);
            std::sort(refined->begin(), refined->end());
            refined->erase(std::unique(refined->begin(), refined->end()), refined->end());
            cp.times = std::move(refined);
        }
        const auto& ct = *cp.times;
        const auto& ft = *fp.times;
        cp.base_index.resize(coarse.times.size());
        {
            std::size_t k = 0;
            for (std::size_t i = 0; i < coarse.times.size(); ++i) {
                while (ct[k] != coarse.times[i]) ++k;
                cp.base_index[i] = static_cast<std::uint32_t>(k);
            }
        }
        cp.dw.assign(ct.size() - 1, 0.0);
        if (!fp.dw2.empty()) cp.dw2.assign(ct.size() - 1, 0.0);
        std::size_t k = 0; // fine interval cursor
        for (std::size_t i = 0; i + 1 < ct.size(); ++i) {
            // every coarse instant appears among the fine refined instants,
            // so intervals nest exactly
            while (k < ft.size() - 1 && ft[k + 1] <= ct[i + 1]) {
                if (ft[k] >= ct[i]) {
                    cp.dw[i] += fp.dw[k];
                    if (!fp.dw2.empty()) cp.dw2[i] += fp.dw2[k];
                }
                ++k;
            }
        }
        out.paths[p] = std::move(cp);
    }
    return out;
}

} // namespace fbsde
