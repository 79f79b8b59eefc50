#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ecodrive {

using Rng = std::mt19937_64;

namespace detail {

// FNV-1a, 64 bit. Stable across platforms; used for config hashes and seed tags.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// seed_episode = mix(base_seed, fnv1a(phase), n_c, episode).
constexpr std::uint64_t episode_seed(std::uint64_t base_seed, std::string_view phase, std::uint64_t n_c,
                                     std::uint64_t episode)
{
    std::uint64_t h = detail::splitmix64(base_seed);
    h = detail::splitmix64(h ^ detail::fnv1a(phase));
    h = detail::splitmix64(h ^ n_c);
    h = detail::splitmix64(h ^ episode);
    return h;
}

// The std distributions are implementation-defined; these are not, so seeded
// runs reproduce across standard libraries.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi] (inclusive).
inline int uniform_int(Rng& rng, int lo, int hi)
{
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(rng() % span);
}

}  // namespace ecodrive
