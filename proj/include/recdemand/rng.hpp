#pragma once

#include <cstdint>
#include <random>

namespace recdemand {

using Rng = std::mt19937_64;

// SplitMix64 step; used to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

// Independent substream for (seed, stream id). Users of a simulation get one
// substream each so that per-user draws do not depend on iteration order.
inline Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1)));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Standard Gumbel draw, the error term of the logit choice model.
inline double gumbel(Rng& rng) {
    double u;
    do {
        u = uniform01(rng);
    } while (u <= 0.0);
    return -std::log(-std::log(u));
}

}  // namespace recdemand
