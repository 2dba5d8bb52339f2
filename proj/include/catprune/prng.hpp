#pragma once

#include <cstdint>
#include <vector>

namespace catprune {

// splitmix64 (Steele, Lea, Flood 2014). Used for seeding and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** 1.0 (Blackman & Vigna 2018), seeded via splitmix64.
//
// All randomness in the toolkit flows through this generator. Integer output
// is exact, and doubles are produced by the standard 53-bit construction
// (x >> 11) * 2^-53, so every stream is bit-reproducible across platforms.
// std::uniform_*_distribution is deliberately not used anywhere: the C++
// standard leaves its output unspecified.
class Prng {
public:
    explicit Prng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    // Independent substream: mixes the tag words into the seed with splitmix64.
    // derive(s, a, b) != derive(s, b, a) in general; callers pass a fixed tag
    // per purpose (epoch index, resample index, ...) to decorrelate streams.
    template <typename... Tags>
    static Prng derive(std::uint64_t seed, Tags... tags) {
        std::uint64_t sm = seed;
        ((sm = splitmix64(sm) ^ static_cast<std::uint64_t>(tags)), ...);
        return Prng(splitmix64(sm));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_double(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). Lemire multiply-shift without rejection:
    // bounded bias < 2^-64, and more importantly a fixed, documented mapping.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // In-place Fisher-Yates shuffle, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Sattolo's cycle algorithm: a uniformly random cyclic permutation,
    // hence a derangement for size >= 2.
    template <typename T>
    void sattolo_cycle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
};

} // namespace catprune
