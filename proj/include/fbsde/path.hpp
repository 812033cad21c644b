#pragma once

// Cadlag path skeletons: values on a finite set of instants (the path is
// constant between instants, right-continuous) plus an exact ledger of the
// true jumps. The ledger is what separates a genuine discontinuity from a
// discretization step of the same size.

#include "fbsde/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

struct Jump {
    double time = 0.0;
    double size = 0.0;
};

struct PathSkeleton {
    std::shared_ptr<const std::vector<double>> times; // sorted, front()==0
    std::vector<double> values;                       // value at times[k]
    std::vector<Jump> jumps;                          // sorted, each time is an instant

    double horizon() const { return times->back(); }
    std::size_t size() const { return values.size(); }
};

inline PathSkeleton make_skeleton(std::vector<double> times, std::vector<double> values,
                                  std::vector<Jump> jumps = {}) {
    std::string bad;
    if (times.size() != values.size() || times.empty()) bad += " times/values size mismatch or empty;";
    for (std::size_t k = 0; k + 1 < times.size(); ++k)
        if (!(times[k] < times[k + 1])) bad += " instants must be strictly increasing;";
    if (!times.empty() && times.front() != 0.0) bad += " first instant must be 0;";
    std::sort(jumps.begin(), jumps.end(), [](const Jump& l, const Jump& r) { return l.time < r.time; });
    for (const auto& j : jumps)
        if (!std::binary_search(times.begin(), times.end(), j.time))
            bad += " jump at " + std::to_string(j.time) + " is not a grid instant;";
    if (!bad.empty()) throw std::invalid_argument("make_skeleton:" + bad);
    PathSkeleton p;
    p.times = std::make_shared<const std::vector<double>>(std::move(times));
    p.values = std::move(values);
    p.jumps = std::move(jumps);
    return p;
}

// value at an arbitrary t in [0, T]: the step function's right-continuous
// evaluation, i.e. the value at the last instant <= t
inline double value_at(const PathSkeleton& p, double t) {
    const auto& ts = *p.times;
    if (t < ts.front() || t > ts.back())
        throw std::invalid_argument("value_at: t outside [0, T]");
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    return p.values[static_cast<std::size_t>(it - ts.begin()) - 1];
}

// left limit x(t-); undefined at t == 0
inline double left_limit_at(const PathSkeleton& p, double t) {
    const auto& ts = *p.times;
    if (t <= ts.front() || t > ts.back())
        throw std::invalid_argument("left_limit_at: t outside (0, T]");
    auto it = std::lower_bound(ts.begin(), ts.end(), t);
    return p.values[static_cast<std::size_t>(it - ts.begin()) - 1];
}

// sup norm over the whole skeleton, including the pre-jump left limits
// reconstructed from the ledger (value minus jump size at each jump time)
inline double sup_norm(const PathSkeleton& p) {
    double m = 0.0;
    for (double v : p.values) m = std::max(m, std::fabs(v));
    std::size_t j = 0;
    while (j < p.jumps.size()) {
        std::size_t j2 = j;
        double total = 0.0;
        while (j2 < p.jumps.size() && p.jumps[j2].time == p.jumps[j].time) total += p.jumps[j2++].size;
        m = std::max(m, std::fabs(value_at(p, p.jumps[j].time) - total));
        j = j2;
    }
    return m;
}

// stopped path x^t: values frozen at value_at(t) past t, ledger truncated
// to jumps at or before t. (x^t)^s == x^{min(s,t)} holds by construction.
inline PathSkeleton stopped_path(const PathSkeleton& p, double t) {
    if (t < p.times->front() || t > p.horizon())
        throw std::invalid_argument("stopped_path: t outside [0, T]");
    PathSkeleton out;
    out.times = p.times;
    out.values = p.values;
    const double frozen = value_at(p, t);
    const auto& ts = *p.times;
    for (std::size_t k = 0; k < ts.size(); ++k)
        if (ts[k] > t) out.values[k] = frozen;
    for (const auto& j : p.jumps)
        if (j.time <= t) out.jumps.push_back(j);
    return out;
}

// ---------------------------------------------------------------- J1 ----

// Certified upper bound on the J1 distance
//   d(x,y) = inf_lambda ( |x o lambda - y|_inf + sup |log slope(lambda)| )
// over a searched family of piecewise-linear increasing bijections of
// [0,T]: the identity plus every monotone matching of x's jump times to
// y's (up to `budget` candidates), slopes clamped to [e^-8, e^8]. Whatever
// the family misses only makes the bound larger, never wrong.

namespace detail {

struct PwlMap {
    // lambda(knot_t[i]) = knot_s[i], linear in between; both strictly increasing
    std::vector<double> knot_t, knot_s;

    double operator()(double t) const {
        auto it = std::upper_bound(knot_t.begin(), knot_t.end(), t);
        std::size_t i = static_cast<std::size_t>(it - knot_t.begin());
        if (i == 0) return knot_s.front();
        if (i == knot_t.size()) return knot_s.back();
        double w = (t - knot_t[i - 1]) / (knot_t[i] - knot_t[i - 1]);
        return knot_s[i - 1] + w * (knot_s[i] - knot_s[i - 1]);
    }

    double inverse(double s) const {
        auto it = std::upper_bound(knot_s.begin(), knot_s.end(), s);
        std::size_t i = static_cast<std::size_t>(it - knot_s.begin());
        if (i == 0) return knot_t.front();
        if (i == knot_s.size()) return knot_t.back();
        double w = (s - knot_s[i - 1]) / (knot_s[i] - knot_s[i - 1]);
        return knot_t[i - 1] + w * (knot_t[i] - knot_t[i - 1]);
    }

    double max_abs_log_slope() const {
        double m = 0.0;
        for (std::size_t i = 0; i + 1 < knot_t.size(); ++i) {
            double slope = (knot_s[i + 1] - knot_s[i]) / (knot_t[i + 1] - knot_t[i]);
            m = std::max(m, std::fabs(std::log(slope)));
        }
        return m;
    }

    bool slopes_in(double lo, double hi) const {
        for (std::size_t i = 0; i + 1 < knot_t.size(); ++i) {
            double slope = (knot_s[i + 1] - knot_s[i]) / (knot_t[i + 1] - knot_t[i]);
            if (!(slope >= lo && slope <= hi)) return false;
        }
        return true;
    }
};

// sup over [0,T] of |x(lambda(t)) - y(t)| for step functions: both
// composed functions only change value at y's instants and at the
// preimages of x's instants, so the sup is a max over those criticals of
// the value and the left limit.
inline double sup_dist_warped(const PathSkeleton& x, const PathSkeleton& y, const PwlMap& lam) {
    std::vector<double> crit;
    crit.reserve(y.times->size() + x.times->size());
    for (double t : *y.times) crit.push_back(t);
    for (double s : *x.times) crit.push_back(lam.inverse(s));
    std::sort(crit.begin(), crit.end());
    crit.erase(std::unique(crit.begin(), crit.end()), crit.end());
    const double T = y.horizon();
    double m = 0.0;
    for (double t : crit) {
        if (t < 0.0 || t > T) continue;
        double s = std::min(std::max(lam(t), 0.0), x.horizon());
        m = std::max(m, std::fabs(value_at(x, s) - value_at(y, t)));
        if (t > 0.0) {
            // left limit of the composition; lambda is continuous and
            // strictly increasing so it passes through
            double sl = std::min(std::max(lam(t), 0.0), x.horizon());
            double xv = sl > 0.0 ? left_limit_at(x, sl) : value_at(x, 0.0);
            m = std::max(m, std::fabs(xv - left_limit_at(y, t)));
        }
    }
    return m;
}

inline std::vector<double> distinct_jump_times(const PathSkeleton& p) {
    std::vector<double> t;
    for (const auto& j : p.jumps)
        if (t.empty() || t.back() != j.time) t.push_back(j.time);
    return t;
}

// enumerate monotone partial matchings of domain times (y's) to range
// times (x's); larger matchings first since aligning every jump is usually
// what shrinks the sup part
inline void enumerate_matchings(const std::vector<double>& dom, const std::vector<double>& ran,
                                std::size_t budget, std::vector<PwlMap>& out, double T) {
    const std::size_t nd = dom.size(), nr = ran.size();
    const std::size_t jmax = std::min(nd, nr);
    std::vector<std::size_t> di, ri;
    // depth-first over pairs (next domain index, next range index)
    std::function<void(std::size_t, std::size_t, std::size_t)> rec =
        [&](std::size_t d0, std::size_t r0, std::size_t want) {
            if (out.size() >= budget) return;
            if (di.size() == want) {
                PwlMap m;
                m.knot_t.push_back(0.0);
                m.knot_s.push_back(0.0);
                for (std::size_t k = 0; k < want; ++k) {
                    m.knot_t.push_back(dom[di[k]]);
                    m.knot_s.push_back(ran[ri[k]]);
                }
                m.knot_t.push_back(T);
                m.knot_s.push_back(T);
                out.push_back(std::move(m));
                return;
            }
            for (std::size_t d = d0; d < nd; ++d)
                for (std::size_t r = r0; r < nr; ++r) {
                    if (out.size() >= budget) return;
                    di.push_back(d);
                    ri.push_back(r);
                    rec(d + 1, r + 1, want);
                    di.pop_back();
                    ri.pop_back();
                }
        };
    for (std::size_t want = jmax; want >= 1; --want) {
        rec(0, 0, want);
        if (out.size() >= budget) break;
    }
}

} // namespace detail

inline double j1_upper_bound(const PathSkeleton& x, const PathSkeleton& y, std::size_t budget = 256) {
    if (x.horizon() != y.horizon())
        throw std::invalid_argument("j1_upper_bound: paths live on different horizons");
    const double T = x.horizon();
    const double slope_lo = std::exp(-8.0), slope_hi = std::exp(8.0);

    detail::PwlMap identity;
    identity.knot_t = {0.0, T};
    identity.knot_s = {0.0, T};
    double best = detail::sup_dist_warped(x, y, identity); // log slope term is 0

    if (budget > 1) {
        auto jx = detail::distinct_jump_times(x);
        auto jy = detail::distinct_jump_times(y);
        if (!jx.empty() && !jy.empty()) {
            std::vector<detail::PwlMap> cands;
            detail::enumerate_matchings(jy, jx, budget - 1, cands, T);
            for (const auto& lam : cands) {
                bool ok = true;
                for (std::size_t i = 0; i + 1 < lam.knot_t.size(); ++i)
                    if (!(lam.knot_t[i] < lam.knot_t[i + 1] && lam.knot_s[i] < lam.knot_s[i + 1])) {
                        ok = false;
                        break;
                    }
                if (!ok || !lam.slopes_in(slope_lo, slope_hi)) continue;
                double cost = detail::sup_dist_warped(x, y, lam) + lam.max_abs_log_slope();
                best = std::min(best, cost);
            }
        }
    }
    return best;
}

} // namespace fbsde
