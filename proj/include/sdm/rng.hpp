#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sdm {

// splitmix64 finalizer, used to spread seeds before feeding the engine and
// to derive independent sub-streams from one master seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    return mix_seed(mix_seed(master) ^ mix_seed(stream));
}

// Seeded random source. The distributions are implemented here rather than
// taken from <random> so that draws are identical across standard library
// implementations; only sqrt/log/cos enter the normal path.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(mix_seed(seed)) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform in (0, 1]; never returns 0
    double uniform_pos() { return 1.0 - uniform(); }

    // uniform integer in [0, n), n >= 1; unbiased via rejection
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller; consumes exactly two uniforms
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // independent sub-stream; depends only on this Rng's seed, not on how
    // many draws have been taken
    Rng derive(uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace sdm
