#pragma once

// Catalog of terminal/path functionals with declared locally-Lipschitz
// profiles |g(x) - g(x')| <= (c + alpha/2 (|x|^r + |x'|^r)) |x - x'|_inf.
// Profiles are declarations checked empirically, not derived.

#include "fbsde/path.hpp"
#include "fbsde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

enum class FunctionalKind {
    terminal_point, // x_T
    sup_norm,       // sup_t |x_t|
    first_jump,     // signed size of the earliest ledger jump, 0 if none
    max_jump,       // largest jump magnitude, 0 if none
    jump_at,        // signed jump size at a fixed time, 0 if none
    integral,       // integral of x against a finite signed measure
    point_eval,     // x_{t*}
    linear,         // integral term plus weighted jump sizes
    composite,      // G1( integral of G2(x_t) dm )
};

// dm = lebesgue_weight * dt + sum_i weight_i * delta_{t_i}
struct MeasureSpec {
    double lebesgue_weight = 0.0;
    std::vector<std::pair<double, double>> atoms; // (time, weight)

    double total_variation(double T) const {
        double tv = std::fabs(lebesgue_weight) * T;
        for (const auto& a : atoms) tv += std::fabs(a.second);
        return tv;
    }
};

// small family of Lipschitz scalar maps used by composite functionals
struct ScalarMap {
    enum class Kind { identity, abs, affine, tanh_scaled } kind = Kind::identity;
    double a = 1.0, b = 0.0; // affine: a*x + b ; tanh_scaled: a*tanh(x)

    double operator()(double x) const {
        switch (kind) {
            case Kind::identity: return x;
            case Kind::abs: return std::fabs(x);
            case Kind::affine: return a * x + b;
            case Kind::tanh_scaled: return a * std::tanh(x);
        }
        return x;
    }
    double lip() const {
        switch (kind) {
            case Kind::identity: return 1.0;
            case Kind::abs: return 1.0;
            case Kind::affine: return std::fabs(a);
            case Kind::tanh_scaled: return std::fabs(a);
        }
        return 1.0;
    }
};

struct LipschitzProfile {
    double c = 1.0;
    double alpha = 0.0;
    double r = 0.0;

    double slope(double sup_x, double sup_y) const {
        return c + 0.5 * alpha * (std::pow(sup_x, r) + std::pow(sup_y, r));
    }
};

struct PathFunctional {
    FunctionalKind kind = FunctionalKind::terminal_point;
    double at = 0.0;       // jump_at / point_eval location
    MeasureSpec measure;   // integral / linear / composite
    std::vector<std::pair<double, double>> jump_weights; // linear: (time, M(time))
    ScalarMap outer, inner; // composite
    LipschitzProfile profile;
};

inline PathFunctional make_functional(FunctionalKind kind) {
    PathFunctional f;
    f.kind = kind;
    switch (kind) {
        case FunctionalKind::terminal_point:
        case FunctionalKind::sup_norm:
        case FunctionalKind::point_eval:
            f.profile = {1.0, 0.0, 0.0};
            break;
        case FunctionalKind::first_jump: // no sup-norm Lipschitz profile exists
        case FunctionalKind::max_jump:
        case FunctionalKind::jump_at:
            f.profile = {2.0, 0.0, 0.0};
            break;
        default:
            break;
    }
    return f;
}

namespace detail {

// signed total jump size at one instant (several atoms can land together)
inline double jump_size_at(const PathSkeleton& p, double t) {
    double s = 0.0;
    for (const auto& j : p.jumps)
        if (j.time == t) s += j.size;
    return s;
}

inline double integral_against(const PathSkeleton& p, const MeasureSpec& m) {
    double acc = 0.0;
    if (m.lebesgue_weight != 0.0) {
        const auto& ts = *p.times;
        for (std::size_t k = 0; k + 1 < ts.size(); ++k)
            acc += p.values[k] * (ts[k + 1] - ts[k]);
        acc *= m.lebesgue_weight;
    }
    for (const auto& a : m.atoms) acc += a.second * value_at(p, a.first);
    return acc;
}

inline double integral_mapped(const PathSkeleton& p, const MeasureSpec& m, const ScalarMap& g2) {
    double acc = 0.0;
    if (m.lebesgue_weight != 0.0) {
        const auto& ts = *p.times;
        for (std::size_t k = 0; k + 1 < ts.size(); ++k)
            acc += g2(p.values[k]) * (ts[k + 1] - ts[k]);
        acc *= m.lebesgue_weight;
    }
    for (const auto& a : m.atoms) acc += a.second * g2(value_at(p, a.first));
    return acc;
}

} // namespace detail

inline double evaluate_functional(const PathFunctional& f, const PathSkeleton& p) {
    switch (f.kind) {
        case FunctionalKind::terminal_point:
            return p.values.back();
        case FunctionalKind::sup_norm:
            return sup_norm(p);
        case FunctionalKind::first_jump: {
            if (p.jumps.empty()) return 0.0;
            double t0 = p.jumps.front().time;
            if (t0 <= 0.0) return 0.0;
            return detail::jump_size_at(p, t0);
        }
        case FunctionalKind::max_jump: {
            double m = 0.0;
            std::size_t j = 0;
            while (j < p.jumps.size()) {
                std::size_t j2 = j;
                double tot = 0.0;
                while (j2 < p.jumps.size() && p.jumps[j2].time == p.jumps[j].time) tot += p.jumps[j2++].size;
                m = std::max(m, std::fabs(tot));
                j = j2;
            }
            return m;
        }
        case FunctionalKind::jump_at:
            return detail::jump_size_at(p, f.at);
        case FunctionalKind::integral:
            return detail::integral_against(p, f.measure);
        case FunctionalKind::point_eval:
            return value_at(p, f.at);
        case FunctionalKind::linear: {
            double acc = detail::integral_against(p, f.measure);
            for (const auto& w : f.jump_weights) acc += w.second * detail::jump_size_at(p, w.first);
            return acc;
        }
        case FunctionalKind::composite:
            return f.outer(detail::integral_mapped(p, f.measure, f.inner));
    }
    throw std::logic_error("evaluate_functional: unhandled kind");
}

// ------------------------------------------------ incremental evaluation --

// Evaluates F(x^t) while a path is being generated, one instant at a time.
// push() receives the pre-jump value (the left-limit reconstruction), the
// settled value, and the total ledger jump size at that instant; value()
// then returns the functional of the path stopped at the last pushed
// instant. Used by the drift during Euler stepping and by the driver's
// path term in the backward pass, where re-evaluating from scratch per
// (instant, path) would cost O(N^2).
class StoppedEvaluator {
  public:
    StoppedEvaluator(const PathFunctional& f, double T) : f_(f), T_(T) {
        std::sort(f_.measure.atoms.begin(), f_.measure.atoms.end());
        cap_.assign(f_.measure.atoms.size(), 0.0);
        reset(0.0, 0.0);
    }

    void reset(double pre0, double post0) {
        t_ = 0.0;
        cur_ = post0;
        sup_ = std::max(std::fabs(pre0), std::fabs(post0));
        run_int_ = 0.0;
        run_int_g2_ = 0.0;
        first_jump_ = 0.0;
        have_first_ = false;
        max_jump_ = 0.0;
        jump_at_ = 0.0;
        lin_jumps_ = 0.0;
        ai_ = 0;
        while (ai_ < f_.measure.atoms.size() && f_.measure.atoms[ai_].first == 0.0)
            cap_[ai_++] = post0;
        pt_have_ = f_.at == 0.0;
        pt_cap_ = post0;
    }

    void push(double t, double pre, double post, double jump_size) {
        run_int_ += cur_ * (t - t_);
        if (f_.kind == FunctionalKind::composite) run_int_g2_ += f_.inner(cur_) * (t - t_);
        while (ai_ < f_.measure.atoms.size() && f_.measure.atoms[ai_].first <= t) {
            cap_[ai_] = f_.measure.atoms[ai_].first < t ? cur_ : post;
            ++ai_;
        }
        if (!pt_have_ && f_.at <= t) {
            pt_cap_ = f_.at < t ? cur_ : post;
            pt_have_ = true;
        }
        sup_ = std::max(sup_, std::max(std::fabs(pre), std::fabs(post)));
        if (jump_size != 0.0) {
            if (!have_first_ && t > 0.0) {
                first_jump_ = jump_size;
                have_first_ = true;
            }
            max_jump_ = std::max(max_jump_, std::fabs(jump_size));
            if (t == f_.at) jump_at_ += jump_size;
            for (const auto& w : f_.jump_weights)
                if (w.first == t) lin_jumps_ += w.second * jump_size;
        }
        cur_ = post;
        t_ = t;
    }

    double running_sup() const { return sup_; }
    double current() const { return cur_; }
    double running_integral() const { return run_int_; } // plain time integral up to t

    // functional of the path stopped at the last pushed instant
    double value() const {
        switch (f_.kind) {
            case FunctionalKind::terminal_point: return cur_;
            case FunctionalKind::sup_norm: return sup_;
            case FunctionalKind::first_jump: return first_jump_;
            case FunctionalKind::max_jump: return max_jump_;
            case FunctionalKind::jump_at: return jump_at_;
            case FunctionalKind::point_eval: return pt_have_ ? pt_cap_ : cur_;
            case FunctionalKind::integral: return measure_total(false);
            case FunctionalKind::linear: return measure_total(false) + lin_jumps_;
            case FunctionalKind::composite: return f_.outer(measure_total(true));
        }
        return 0.0;
    }

  private:
    double measure_total(bool mapped) const {
        double tail = mapped ? f_.inner(cur_) : cur_;
        double acc = f_.measure.lebesgue_weight * ((mapped ? run_int_g2_ : run_int_) + tail * (T_ - t_));
        for (std::size_t a = 0; a < f_.measure.atoms.size(); ++a) {
            double v = a < ai_ ? cap_[a] : cur_;
            acc += f_.measure.atoms[a].second * (mapped ? f_.inner(v) : v);
        }
        return acc;
    }

    PathFunctional f_;
    double T_;
    double t_ = 0.0, cur_ = 0.0, sup_ = 0.0;
    double run_int_ = 0.0, run_int_g2_ = 0.0;
    double first_jump_ = 0.0;
    bool have_first_ = false;
    double max_jump_ = 0.0, jump_at_ = 0.0, lin_jumps_ = 0.0;
    std::vector<double> cap_; // x at the measure's atom times, once passed
    std::size_t ai_ = 0;
    bool pt_have_ = false;
    double pt_cap_ = 0.0;
};

// ------------------------------------------------- profile verification --

struct LipschitzReport {
    std::size_t pairs = 0;
    std::size_t violations = 0;
    double max_ratio = 0.0; // |g(x)-g(x')| / (profile slope * |x-x'|_inf)
};

namespace detail {

// random skeleton on [0,1]: a random walk on a 17-instant grid with 0-3
// extra jump instants. Deliberately crude; it only needs to explore path
// space, not model anything.
inline PathSkeleton random_skeleton(const CounterStream& s, std::uint64_t base, double scale) {
    std::vector<double> times;
    for (int k = 0; k <= 16; ++k) times.push_back(static_cast<double>(k) / 16.0);
    std::uint64_t c = base;
    int njump = static_cast<int>(s.bits(c++) % 4);
    std::vector<Jump> jumps;
    for (int j = 0; j < njump; ++j) {
        double t = std::floor(s.uniform(c++) * 15.0 + 1.0) / 16.0; // grid instant in (0,1)
        double sz = scale * (s.uniform(c++) * 4.0 - 2.0);
        if (sz != 0.0) jumps.push_back({t, sz});
    }
    std::sort(jumps.begin(), jumps.end(), [](const Jump& l, const Jump& r) { return l.time < r.time; });
    std::vector<double> values(times.size());
    double v = scale * (s.uniform(c++) - 0.5);
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (k > 0) {
            v += scale * 0.5 * (s.uniform(c++) - 0.5);
            for (const auto& j : jumps)
                if (j.time == times[k]) v += j.size;
        }
        values[k] = v;
    }
    return make_skeleton(std::move(times), std::move(values), std::move(jumps));
}

} // namespace detail

// Check the declared profile on random path pairs, including perturbed
// near-copies (small |x - x'| is where sloppy profiles fail first).
inline LipschitzReport verify_lipschitz_profile(const PathFunctional& f, std::size_t n_pairs,
                                                std::uint64_t seed, double scale = 2.0,
                                                double tol = 1e-9) {
    CounterStream s(seed, 0, StreamRole::scenario);
    LipschitzReport rep;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        std::uint64_t base = i * 4096;
        PathSkeleton x = detail::random_skeleton(s, base, scale);
        PathSkeleton y;
        if (i % 2 == 0) {
            y = detail::random_skeleton(s, base + 2048, scale);
        } else {
            // perturb x by a small uniform shift plus one value tweak
            y = x;
            double eps = scale * 1e-3 * (s.uniform(base + 2048) - 0.5);
            for (auto& v : y.values) v += eps;
            std::size_t k = s.bits(base + 2049) % y.values.size();
            y.values[k] += scale * 1e-3 * (s.uniform(base + 2050) - 0.5);
        }
        // sup distance between step skeletons on the union of instants
        double dist = 0.0;
        {
            std::vector<double> crit(*x.times);
            crit.insert(crit.end(), y.times->begin(), y.times->end());
            std::sort(crit.begin(), crit.end());
            crit.erase(std::unique(crit.begin(), crit.end()), crit.end());
            for (double t : crit) dist = std::max(dist, std::fabs(value_at(x, t) - value_at(y, t)));
        }
        if (dist == 0.0) continue;
        double lhs = std::fabs(evaluate_functional(f, x) - evaluate_functional(f, y));
        double rhs = f.profile.slope(sup_norm(x), sup_norm(y)) * dist;
        double ratio = rhs > 0.0 ? lhs / rhs : (lhs > 0.0 ? HUGE_VAL : 0.0);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        if (lhs > rhs * (1.0 + tol)) ++rep.violations;
        ++rep.pairs;
    }
    return rep;
}

} // namespace fbsde
