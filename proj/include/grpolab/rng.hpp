#pragma once

#include <cstdint>
#include <random>

namespace grpolab {

// Finalizer from splitmix64. Stateless; used to fold stream keys into seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random stream. Every random draw in the project flows through
// an explicitly derived stream so that runs replay bit-for-bit regardless of
// scheduling. std::uniform_* distributions are avoided on purpose: their
// output is not pinned down by the standard, mt19937_64 itself is.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), n > 0.
    std::size_t uniform_int(std::size_t n) {
        std::size_t v = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

private:
    std::mt19937_64 gen_;
};

// Stream purposes. Each (seed, tag, a, b, c) tuple names one independent stream.
namespace stream_tag {
inline constexpr std::uint64_t prompts = 0x01;
inline constexpr std::uint64_t rollout = 0x02;
inline constexpr std::uint64_t eval = 0x03;
}  // namespace stream_tag

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                             std::uint64_t c = 0, std::uint64_t d = 0) {
    std::uint64_t s = mix64(seed);
    s = mix64(s ^ a);
    s = mix64(s ^ b);
    s = mix64(s ^ c);
    return mix64(s ^ d);
}

inline RngStream derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                               std::uint64_t c = 0, std::uint64_t d = 0) {
    return RngStream(mix_key(seed, a, b, c, d));
}

}  // namespace grpolab
