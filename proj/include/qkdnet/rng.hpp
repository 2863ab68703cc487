#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace qkdnet {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
    // FNV-1a, used only to derive named sub-streams.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// PCG32: small deterministic generator with explicit state, identical on
/// every platform (std:: distributions are not reproducible across stdlibs).
class Rng {
public:
    Rng() : Rng(0x853c49e6748fea9bull, 0xda3e39cb94b95bdbull) {}

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        inc_ = (stream << 1u) | 1u;
        state_ = 0u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    /// Uniform in [0, 1) with 32 bits of resolution.
    double uniform01() { return next_u32() * 0x1.0p-32; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; caches the spare deviate.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Deterministic child stream identified by a label.
    Rng fork(std::string_view label) const {
        std::uint64_t s = state_ ^ hash_str(label);
        std::uint64_t a = splitmix64(s);
        std::uint64_t b = splitmix64(s);
        return Rng(a, b);
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace qkdnet
