#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

// Deterministic partition of [0, T]: uniform instants plus optional extra
// ones (quantile markers, shift times and the like).
struct TimeGrid {
    double T = 1.0;
    std::vector<double> times; // sorted, times.front() == 0, times.back() == T

    std::size_t intervals() const { return times.empty() ? 0 : times.size() - 1; }
    double dt(std::size_t i) const { return times[i + 1] - times[i]; }
    double mesh() const {
        double m = 0.0;
        for (std::size_t i = 0; i + 1 < times.size(); ++i) m = std::max(m, times[i + 1] - times[i]);
        return m;
    }
    // index of the instant equal to t (within tol), or npos
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t find_instant(double t, double tol = 1e-9) const {
        auto it = std::lower_bound(times.begin(), times.end(), t - tol);
        if (it != times.end() && std::fabs(*it - t) <= tol)
            return static_cast<std::size_t>(it - times.begin());
        return npos;
    }
};

inline TimeGrid make_grid(double T, std::size_t n_intervals, const std::vector<double>& extra = {}) {
    std::vector<std::string> bad;
    if (!std::isfinite(T) || T <= 0.0) bad.push_back("horizon T must be finite and positive");
    if (n_intervals < 1) bad.push_back("n_intervals must be >= 1");
    for (double e : extra)
        if (!std::isfinite(e) || e <= 0.0 || e >= T)
            bad.push_back("extra instant " + std::to_string(e) + " outside (0, T)");
    if (!bad.empty()) {
        std::string msg = "make_grid:";
        for (const auto& b : bad) msg += " " + b + ";";
        throw std::invalid_argument(msg);
    }
    TimeGrid g;
    g.T = T;
    g.times.reserve(n_intervals + 1 + extra.size());
    for (std::size_t i = 0; i <= n_intervals; ++i)
        g.times.push_back(static_cast<double>(i) * T / static_cast<double>(n_intervals));
    g.times.insert(g.times.end(), extra.begin(), extra.end());
    std::sort(g.times.begin(), g.times.end());
    g.times.erase(std::unique(g.times.begin(), g.times.end()), g.times.end());
    g.times.back() = T; // guard against i*T/n rounding drift at the top
    return g;
}

} // namespace fbsde
