#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedshift::rng {

// splitmix64 step, used to mix seed words into independent substreams.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d4ecda6f8c53ebULL;
    return x ^ (x >> 31);
}

// Derive a named substream seed from a base seed and a list of tags
// (client id, round, purpose, ...). All randomness in the project flows
// through this so a single config seed reproduces every stream.
inline uint64_t derive(uint64_t base, std::initializer_list<uint64_t> tags) {
    uint64_t s = splitmix64(base);
    for (uint64_t t : tags) s = splitmix64(s ^ (t + 0x632be59bd9b4e019ULL));
    return s;
}

inline std::mt19937_64 engine(uint64_t base, std::initializer_list<uint64_t> tags = {}) {
    return std::mt19937_64(derive(base, tags));
}

}  // namespace fedshift::rng
