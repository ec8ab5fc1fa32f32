#pragma once

#include <cstdint>

namespace robermix {

// SplitMix64 generator. Used everywhere randomness is needed (weight init,
// shuffling, dropout) so that runs are bitwise reproducible across platforms,
// unlike std::uniform_*_distribution whose output is implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n) via Lemire's multiply-shift rejection.
    std::uint64_t bounded(std::uint64_t n) {
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Derives an independent stream; streams for distinct tags never overlap
    // in practice because the seed is remixed through SplitMix64.
    Rng fork(std::uint64_t tag) const {
        Rng mixer(state_ ^ (0xD1B54A32D192ED03ULL * (tag + 1)));
        return Rng(mixer.next_u64());
    }

  private:
    std::uint64_t state_;
};

}  // namespace robermix
