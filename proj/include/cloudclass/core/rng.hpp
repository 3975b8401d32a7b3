#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace cloudclass {

/// FNV-1a 64-bit accumulator with a splitmix64 finalizer. Used to derive
/// independent child seeds from (global seed, identifiers, purpose tag).
class Hash64 {
public:
    Hash64& absorb(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            state_ ^= (v >> (8 * i)) & 0xffu;
            state_ *= 0x100000001b3ull;
        }
        return *this;
    }

    Hash64& absorb(std::string_view s) {
        for (unsigned char c : s) {
            state_ ^= c;
            state_ *= 0x100000001b3ull;
        }
        // Length terminator so ("ab","c") and ("a","bc") differ.
        return absorb(static_cast<std::uint64_t>(s.size()));
    }

    std::uint64_t digest() const {
        std::uint64_t z = state_ + 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

/// Deterministic seed derivation: same inputs give the same child seed,
/// distinct purpose tags give independent streams. Pure function of its
/// inputs, so generation order and parallelism never change any seed.
struct SeedSpec {
    std::uint64_t global_seed = 0;

    std::uint64_t derive(std::string_view scene_id, std::uint64_t object_index,
                         std::uint64_t sample_index, std::string_view purpose) const {
        Hash64 h;
        h.absorb(global_seed).absorb(scene_id).absorb(object_index).absorb(sample_index).absorb(purpose);
        return h.digest();
    }

    std::uint64_t derive(std::string_view tag, std::uint64_t index = 0) const {
        Hash64 h;
        h.absorb(global_seed).absorb(tag).absorb(index);
        return h.digest();
    }
};

/// mt19937_64 engine (bit-reproducible per the standard) with hand-rolled
/// variate transforms; std::uniform_real_distribution and friends are
/// implementation-defined and would break cross-platform determinism.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    /// Box-Muller; caches the spare variate, so draw order is deterministic.
    double normal(double mu = 0.0, double sigma = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + sigma * spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return mu + sigma * r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cloudclass
