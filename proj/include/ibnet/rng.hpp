#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ibnet {

/// splitmix64 step; also used to mix seeds into independent streams.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a child seed from (seed, stream). Used so that per-dyad / per-fold
/// generators are independent of evaluation order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0x2545f4914f6cdd1dULL * (stream + 1));
    return splitmix64_next(s);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(seed, a, b), c);
}

/// Deterministic RNG with self-contained distributions. Distribution code in
/// the standard library is implementation-defined, which would break
/// bit-reproducibility across toolchains, so uniform/gaussian are implemented
/// here directly on top of splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0x6a09e667f3bcc908ULL) {
        // advance once so that seed 0 does not start at the mixer fixed point
        (void)splitmix64_next(state_);
    }

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller (pairs are cached).
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// FNV-1a 64-bit over an arbitrary byte range. Deterministic across platforms;
/// used for content hashes (WL tokens, config hashes).
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t h) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    return fnv1a64(bytes, 8, h);
}

} // namespace ibnet
