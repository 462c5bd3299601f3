#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fvita {

// splitmix64 step; the backbone of all randomness in the artifact.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic seed derivation. mix_seed(s, k) is used wherever a child
// stream must be independent of sibling streams (per-sample noise seeds,
// per-parameter initializers, per-epoch shuffles).
inline uint64_t mix_seed(uint64_t seed, uint64_t key) {
    uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2));
    uint64_t t = s;
    return splitmix64(t);
}

inline uint64_t hash_str(std::string_view s) {
    // FNV-1a 64-bit.
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t mix_seed(uint64_t seed, std::string_view tag) {
    return mix_seed(seed, hash_str(tag));
}

// Portable deterministic RNG: splitmix64 stream + Box-Muller gaussians.
// Avoids std::*_distribution so runs reproduce bit-exactly across library
// versions on the same platform.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        uint64_t span = uint64_t(hi - lo) + 1;
        return lo + int(next_u64() % span);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fvita
