#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace quadapt {

// splitmix64 (Steele et al.) — used only for deriving child seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Hierarchical seed derivation: child = splitmix64(parent ^ fnv1a(stream)).
// Every consumer of randomness in this library owns a named stream, so adding
// draws to one stream never perturbs another.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) {
    std::uint64_t state = parent ^ (fnv1a64(stream) * 0x9E3779B97F4A7C15ULL);
    return splitmix64(state);
}

// The one deterministic generator used everywhere: std::mt19937_64 (whose
// output sequence is fixed by the standard) with hand-written uniform/normal
// transforms, so results are reproducible bit-for-bit across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1): top 53 bits of the engine output.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Box–Muller; the second deviate of each pair is cached.
    double normal(double mean, double stddev) {
        if (has_cached_) {
            has_cached_ = false;
            return mean + stddev * cached_;
        }
        double u1 = unit();
        double u2 = unit();
        while (u1 <= 0.0) u1 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return mean + stddev * (r * std::cos(theta));
    }

    // Index in [0, bound). Floor of unit()*bound: negligible bias, fully
    // deterministic, which is what matters here.
    std::size_t index(std::size_t bound) {
        const auto i = static_cast<std::size_t>(unit() * static_cast<double>(bound));
        return i >= bound ? bound - 1 : i;
    }

private:
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace quadapt
