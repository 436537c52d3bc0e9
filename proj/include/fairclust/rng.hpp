#pragma once

#include <cstdint>
#include <random>

namespace fairclust {

// splitmix64: used to derive independent stream seeds from (seed, tags).
// Keeping derivation explicit makes every parallel loop reproducible
// regardless of worker count or execution order.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
    return splitmix64(splitmix64(seed) ^ splitmix64(tag));
}

inline uint64_t derive_seed(uint64_t seed, uint64_t tag_a, uint64_t tag_b) {
    return derive_seed(derive_seed(seed, tag_a), tag_b);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    return derive_seed(derive_seed(seed, a, b), c);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Uniform double in [0, 1).
    double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        // rejection sampling keeps the draw unbiased for any n
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

}  // namespace fairclust
