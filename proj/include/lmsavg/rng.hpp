#ifndef LMSAVG_RNG_HPP
#define LMSAVG_RNG_HPP

#include <cstdint>
#include <random>

namespace lmsavg {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Seed-splitting rule: stream `s` of replicate `r` under master seed `m` is
// seeded with splitmix64(splitmix64(m ^ splitmix64(r)) + s). Replicates are
// therefore independent of execution order and of the number of workers.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t stream) {
    return splitmix64(splitmix64(master ^ splitmix64(replicate)) + stream);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t replicate, std::uint64_t stream) {
    return Rng(derive_seed(master, replicate, stream));
}

} // namespace lmsavg

#endif // LMSAVG_RNG_HPP
