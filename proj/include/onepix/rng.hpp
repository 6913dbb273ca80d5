#pragma once

#include <cmath>
#include <cstdint>

namespace onepix {

// Seeded random stream used everywhere randomness is needed. Results must be
// reproducible bit-for-bit from a seed, independent of platform and standard
// library, so the generator and every distribution on top of it are spelled
// out here rather than taken from <random>.
//
// The generator is splitmix64: state advances by the 64-bit golden ratio and
// each output is the finalizer
//
//     z  = state += 0x9E3779B97F4A7C15
//     z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//     z ^= z >> 27;  z *= 0x94D049BB133111EB
//     return z ^ (z >> 31)
//
// Derived quantities:
//   uniform():    (next_u64() >> 11) * 2^-53, uniform in [0, 1)
//   below(n):     rejection sampling of next_u64() masked to the smallest
//                 covering power of two, uniform over {0, ..., n-1}
//   normal():     Marsaglia polar transform of uniform() pairs; the spare
//                 variate is cached, so draws come in seeded pairs
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 significant bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    template <class T>
    T uniform_as() {
        return static_cast<T>(uniform());
    }

    // Uniform over {0, ..., bound-1}; bound must be >= 1.
    std::uint64_t below(std::uint64_t bound) {
        std::uint64_t mask = bound - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            const std::uint64_t v = next_u64() & mask;
            if (v < bound) return v;
        }
    }

    // Standard normal via the polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    template <class T>
    T normal_as() {
        return static_cast<T>(normal());
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Deterministic seed fan-out: derive_seed(seed, k) is the (k+1)-th raw output
// of splitmix64 seeded with `seed`. One parent seed yields independent child
// streams without consuming the parent stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Stream ids for the documented seed fan-out (command seed -> component seeds).
namespace seed_stream {
inline constexpr std::uint64_t kAttack = 0;
inline constexpr std::uint64_t kSaliency = 1;
inline constexpr std::uint64_t kCorpus = 2;
inline constexpr std::uint64_t kWeights = 3;
inline constexpr std::uint64_t kShuffle = 4;
}  // namespace seed_stream

}  // namespace onepix
