#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace labsr {

/** Counter-based splittable generator (SplitMix64).
 *
 *  Satisfies UniformRandomBitGenerator, so it plugs into the <random>
 *  distributions.  Because the state advances by a fixed Weyl increment,
 *  a (key, counter) pair always yields the same stream, which is what makes
 *  dataset generation reproducible independent of draw order elsewhere.
 */
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/** Mixes a master seed with an ordered list of integer tokens into a fresh
 *  64-bit sub-seed.  Pure function: the same (master, tokens) always maps to
 *  the same sub-seed, and distinct token tuples decorrelate via the SplitMix64
 *  finalizer.  Used to give every (function, n, rsnr, replicate) cell its own
 *  independent stream.
 */
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tokens) {
    std::uint64_t h = master ^ 0xA0761D6478BD642FULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
        SplitMix64 fin(h);
        h = fin();
    };
    for (std::uint64_t t : tokens) mix(t);
    return h;
}

/** Bit-stable encoding of a double for seed derivation. */
inline std::uint64_t seed_token(double v) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    __builtin_memcpy(&bits, &v, sizeof bits);
    return bits;
}

/** The chain generator.  Seeded via SplitMix64 expansion so that nearby seeds
 *  do not produce correlated initial states.
 */
inline std::mt19937_64 make_chain_rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    std::seed_seq seq{sm(), sm(), sm(), sm()};
    return std::mt19937_64(seq);
}

} // namespace labsr
