#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace bdan {

using Rng = std::mt19937_64;

/// Independent stream keyed by a run seed and a path of small integers
/// (task, fold, step, purpose, ...). Streams never depend on scheduling.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * path.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (std::uint64_t p : path) {
        words.push_back(static_cast<std::uint32_t>(p));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

}  // namespace bdan
