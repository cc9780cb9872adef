#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ecgt2t {

// Deterministic RNG used everywhere randomness is needed. All transforms
// (uniform, bounded, normal) are hand-rolled on top of mt19937_64 so that
// sequences are identical across standard library implementations; the
// std::* distributions do not guarantee that.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t u64() { return eng_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Multiply-shift reduction; bias is < 2^-53.
    uint64_t bounded(uint64_t n) {
        return static_cast<uint64_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; caches the second deviate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Independent substream keyed by (this rng's seed material, stream id).
    static Rng fork(uint64_t seed, uint64_t stream) {
        return Rng(mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

private:
    // splitmix64 finalizer
    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ecgt2t
