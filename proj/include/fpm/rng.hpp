#ifndef FPM_RNG_HPP
#define FPM_RNG_HPP

#include <cmath>
#include <cstdint>

namespace fpm {

/// Deterministic, platform-independent random source (splitmix64 core).
/// Every stochastic stage in the repo draws from this so that a seed pins
/// byte-identical outputs everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Poisson sample; Knuth below lambda = 30, normal approximation above.
    double poisson(double lambda) {
        if (lambda <= 0.0) return 0.0;
        if (lambda < 30.0) {
            double limit = std::exp(-lambda);
            double p = 1.0;
            double k = 0.0;
            do {
                k += 1.0;
                p *= uniform();
            } while (p > limit);
            return k - 1.0;
        }
        double v = std::round(lambda + std::sqrt(lambda) * normal());
        return v < 0.0 ? 0.0 : v;
    }

    /// Derives an independent stream, e.g. one per dataset sample.
    Rng fork(uint64_t salt) {
        uint64_t s = next_u64();
        return Rng(s ^ (salt * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL));
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fpm

#endif
