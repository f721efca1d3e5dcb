#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace rag {

// 64-bit finalizer (splitmix64). Used wherever two integers have to be folded
// into one seed without the streams becoming correlated.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ b);
}

// Single-owner seeded random stream. The engine is std::mt19937_64; every
// distribution on top of it is written out explicitly so that a given seed
// produces the same draw sequence on any platform and standard library.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform index in [0, n). Rejection sampling, no modulo bias.
    std::size_t next_index(std::size_t n) {
        if (n <= 1)
            return 0;
        const std::uint64_t limit =
            std::numeric_limits<std::uint64_t>::max() -
            std::numeric_limits<std::uint64_t>::max() % static_cast<std::uint64_t>(n);
        std::uint64_t v = eng_();
        while (v >= limit)
            v = eng_();
        return static_cast<std::size_t>(v % static_cast<std::uint64_t>(n));
    }

    // Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via the Marsaglia polar method (second component of the
    // pair is discarded to keep the stream stateless between calls).
    double next_normal() {
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    // Gamma(shape k, scale 1), Marsaglia-Tsang; the k < 1 case boosts via
    // Gamma(k + 1) * U^(1/k).
    double next_gamma(double k) {
        if (k < 1.0) {
            double u = next_double();
            if (u <= 0.0)
                u = 0x1.0p-53;
            return next_gamma(k + 1.0) * std::pow(u, 1.0 / k);
        }
        const double d = k - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = next_normal();
            double t = 1.0 + c * x;
            if (t <= 0.0)
                continue;
            double v = t * t * t;
            double u = next_double();
            if (u < 1.0 - 0.0331 * x * x * x * x)
                return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v;
        }
    }

    double next_beta(double a, double b) {
        const double x = next_gamma(a);
        const double y = next_gamma(b);
        const double s = x + y;
        if (s <= 0.0)
            return 0.5;
        return x / s;
    }

private:
    std::mt19937_64 eng_;
};

} // namespace rag
