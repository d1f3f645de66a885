#ifndef LYMPHNET_RNG_HPP
#define LYMPHNET_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace lymphnet::rng {

// splitmix64 finalizer; stable across platforms.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derive an independent stream from (seed, stream id).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ (stream * 0xD6E8FEB86659FD93ull));
}

// std::mt19937 is fully specified by the standard, so sequences are portable.
// The distributions below are hand-rolled because the standard ones are not.
using Engine = std::mt19937;

inline Engine make_engine(std::uint64_t seed) {
    return Engine(static_cast<std::uint32_t>(mix64(seed) >> 32));
}

// Unbiased integer in [0, n) by rejection.
inline std::uint32_t uniform_u32(Engine& eng, std::uint32_t n) {
    const std::uint32_t limit = (0xFFFFFFFFu / n) * n;  // multiples of n below 2^32
    std::uint32_t r;
    do {
        r = eng();
    } while (r >= limit);
    return r % n;
}

// 53-bit uniform in [0, 1).
inline double uniform01(Engine& eng) {
    const std::uint64_t hi = eng();
    const std::uint64_t lo = eng();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

// Fisher-Yates; std::shuffle is implementation-defined, this is not.
template <typename Vec>
void shuffle(Vec& v, Engine& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = uniform_u32(eng, static_cast<std::uint32_t>(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace lymphnet::rng

#endif
