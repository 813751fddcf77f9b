#pragma once

// Counter-based random numbers. Every draw is a pure hash of
// (seed, stream, index), so sub-streams for different variables are
// independent and the draw for index i does not depend on how many other
// draws were made. Uniforms are strictly inside (0,1).

#include <cstdint>

namespace survsens {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ b);
}

inline std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t index) {
    return splitmix64(hash_combine(seed, stream) ^ index);
}

inline double bits_to_unit(std::uint64_t bits) {
    // 53 random bits -> [0, 1-2^-53], shifted by half an ulp into (0,1)
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index) {
    return bits_to_unit(counter_bits(seed, stream, index));
}

// Sequential view of one sub-stream.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    double next() { return counter_uniform(seed_, stream_, counter_++); }
    std::uint64_t next_bits() { return counter_bits(seed_, stream_, counter_++); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

} // namespace survsens
