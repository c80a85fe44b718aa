#pragma once

#include <cmath>
#include <cstdint>

namespace shadowlab {

// SplitMix64 (Steele/Lea/Flood). Counter-based: output i of the stream keyed
// by `seed` depends only on (seed, i), so batch items can draw their
// randomness independently of execution order.
inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t state) {
    std::uint64_t z = state + kSplitMixGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// i-th output of the SplitMix64 stream keyed by `seed`, in O(1).
inline std::uint64_t splitmix64_at(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed + index * kSplitMixGamma);
}

/// Deterministic generator over the SplitMix64 stream keyed by (seed, counter).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() { return splitmix64_at(seed_, counter_++); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Modulo reduction; bias is negligible for
    /// the small n used here (entry counts, pixel indices).
    std::uint64_t bounded(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller. One value per call, second discarded.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace shadowlab
