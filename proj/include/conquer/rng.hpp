#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace conquer {

using Rng = std::mt19937_64;

/// Deterministic, non-overlapping stream for a (seed, stream-path) pair.
///
/// Parallel workers and per-subset estimators key their generator by a path of
/// counters (e.g. {iteration, subset}) instead of sharing one sequential
/// generator, so results do not depend on scheduling or thread count.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * path.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto p : path) push(p);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline double uniform01(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double normal(Rng &rng, double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace conquer
