#pragma once

#include <cstdint>
#include <random>

namespace superloc {

using Rng = std::mt19937_64;

/// splitmix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent sub-seed for (master, index, stream); schedule-independent so
/// parallel and sequential trial loops draw the same numbers.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0)
{
    return mix64(mix64(mix64(master) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL));
}

} // namespace superloc
