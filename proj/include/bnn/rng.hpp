#pragma once

#include <cstdint>

namespace bnn {

/// splitmix64 step, used to derive independent per-entry seeds.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ (stream * 0x9e3779b97f4a7c15ULL)) + index);
}

}  // namespace bnn
