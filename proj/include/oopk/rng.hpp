// SPDX-License-Identifier: Apache-2.0
//
// Deterministic 64-bit PRNG with named sub-streams.
//
// Core generator: xorshift64* (Marsaglia shift sequence 12/25/27 with the
// 2685821657736338717 multiplier). Stream seeds are derived from the
// constructing seed by hashing the stream name (FNV-1a) and mixing through
// splitmix64, so draws on one stream never perturb another.

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace oopk {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : seed_mix_(splitmix64(seed)), state_(splitmix64(splitmix64(seed))) {
        if (state_ == 0) state_ = 0x6a09e667f3bcc909ULL;  // xorshift state must be nonzero
    }

    // Sub-stream split: same seed + same name -> same stream, independent of
    // draws already taken on this generator.
    Rng stream(std::string_view name) const { return Rng(seed_mix_ ^ fnv1a(name)); }
    Rng stream(std::string_view name, std::uint64_t index) const {
        return Rng(seed_mix_ ^ fnv1a(name) ^ splitmix64(index));
    }

    std::uint64_t next_u64() {
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; one spare cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

private:
    std::uint64_t seed_mix_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace oopk
