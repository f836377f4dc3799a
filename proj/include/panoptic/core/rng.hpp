#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace panoptic {

/// SplitMix64-based generator. std::<random> distributions are
/// implementation-defined, so everything that must be reproducible
/// bit-for-bit across toolchains goes through this class instead.
/// Seeds are scrambled on construction: callers routinely use sequential
/// seeds, which must map to decorrelated streams.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(scramble(seed)) {}

    static std::uint64_t scramble(std::uint64_t z) {
        z ^= z >> 33;
        z *= 0xff51afd7ed558ccdULL;
        z ^= z >> 33;
        z *= 0xc4ceb9fe1a85ec53ULL;
        z ^= z >> 33;
        return z;
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        // Debiased multiply-shift (Lemire).
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Poisson draw; Knuth's product method for small lambda, rounded
    /// normal approximation beyond (error is far below sampling noise there).
    std::uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda > 256.0) {
            const double g = normal(lambda, std::sqrt(lambda));
            return g <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(g));
        }
        const double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    /// Independent stream derived from this seed; used for per-object
    /// sub-seeding so parallel generation stays schedule-independent.
    Rng fork(std::uint64_t stream) const {
        Rng r(state_ ^ (0xa0761d6478bd642fULL * (stream + 1)));
        r.next_u64();
        return r;
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace panoptic
