#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, path index, stream role, counter), so a path can be generated in
// isolation and parallel sweeps agree with serial ones bit for bit.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fbsde {

// splitmix64 finalizer. Good avalanche, the usual choice for hashing a
// counter into 64 random-looking bits.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

enum class StreamRole : std::uint64_t {
    brownian = 1,         // increments of the driving Brownian motion
    brownian_coupled = 2, // the independent copy used for coupled fields
    jump_count = 3,       // Poisson counts per atom
    jump_time = 4,        // uniform jump times per atom
    scenario = 5,         // scratch stream for tests and tools
};

// Inverse standard normal CDF. Acklam's rational approximation followed by
// one Halley step against erfc, which brings it to near machine precision.
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("inverse_normal_cdf: p must lie in (0,1), got " + std::to_string(p));

    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;

    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley refinement: e is the CDF error, u the Newton step.
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

// One logical stream of iid draws addressed by a 64-bit counter.
class CounterStream {
  public:
    CounterStream(std::uint64_t seed, std::uint64_t path, StreamRole role) {
        // Mix the key components in stages; a plain xor of the three would
        // alias (seed, path) pairs against (path, seed).
        std::uint64_t k = mix64(seed ^ 0x8f1bbcdcbfa53e0bull);
        k = mix64(k + path * 0xd1342543de82ef95ull);
        key_ = mix64(k ^ (static_cast<std::uint64_t>(role) << 32));
    }

    std::uint64_t bits(std::uint64_t counter) const {
        // splitmix64 sequence seeded by the stream key.
        return mix64(key_ + counter * 0x9e3779b97f4a7c15ull);
    }

    // Strictly inside (0,1): (n + 1/2) / 2^53 with n on 53 bits.
    double uniform(std::uint64_t counter) const {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal(std::uint64_t counter) const { return inverse_normal_cdf(uniform(counter)); }

    std::uint64_t key() const { return key_; }

  private:
    std::uint64_t key_;
};

// Poisson draw by sequential-search inversion. Means above 20 are split
// into chunks so the search stays short; each chunk consumes exactly one
// counter, so the layout is deterministic: counters [counter_base,
// counter_base + poisson_counter_budget(mean)).
inline std::uint64_t poisson_counter_budget(double mean) {
    if (mean <= 0.0) return 0;
    return static_cast<std::uint64_t>(std::ceil(mean / 20.0));
}

inline std::uint32_t poisson_draw(const CounterStream& s, std::uint64_t counter_base, double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean))
        throw std::invalid_argument("poisson_draw: mean must be finite and nonnegative");
    std::uint32_t total = 0;
    std::uint64_t ctr = counter_base;
    double left = mean;
    while (left > 0.0) {
        double m = left > 20.0 ? 20.0 : left;
        left -= m;
        if (m <= 0.0) break;
        double u = s.uniform(ctr++);
        double p = std::exp(-m);
        double cdf = p;
        std::uint32_t k = 0;
        // Tail guard: beyond mean + 12 sqrt(mean) + 60 the mass left is
        // below 1e-15; clamping there is invisible at Monte Carlo scale.
        const std::uint32_t kmax = static_cast<std::uint32_t>(m + 12.0 * std::sqrt(m) + 60.0);
        while (u > cdf && k < kmax) {
            ++k;
            p *= m / static_cast<double>(k);
            cdf += p;
        }
        total += k;
    }
    return total;
}

} // namespace fbsde
