#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace mia {

// SplitMix64 generator. The standard <random> distributions are
// implementation-defined, which would break the bit-for-bit reproducibility
// this toolkit promises, so the few draws we need are implemented here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (cosine branch only, no cached spare:
    // every draw consumes exactly two uniforms, which keeps streams
    // position-independent).
    double next_normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        // u1 == 0 would take log(0); nudge to the smallest representable draw.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    double next_normal(double mean, double stddev) {
        return mean + stddev * next_normal();
    }

    // Uniform integer in [0, n). Multiply-shift map of a full 64-bit draw;
    // the bias is ~n/2^64 and irrelevant for shuffling.
    std::uint64_t bounded(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Fisher-Yates. std::shuffle is not seed-stable across standard library
    // implementations; this is.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Per-sample stream derivation: seed XOR sample_id, relying on SplitMix64's
// output mixer to decorrelate adjacent seeds. Callers that need domain
// separation (e.g. audit vs. shadow training) mix a tag into `seed` first.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(seed ^ stream_id);
}

// One mixing step, used to derive role-specific seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    Rng r(seed ^ tag);
    return r.next_u64();
}

}  // namespace mia
