#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include "conquer/errors.hpp"

namespace conquer {

/// Bitstrings and qubit subsets are both stored as 64-bit masks; qubit i lives at bit i.
using Bits = std::uint64_t;

inline constexpr unsigned kMaxQubits = 64;

inline constexpr Bits low_mask(unsigned n) {
    return n >= 64 ? ~Bits{0} : (Bits{1} << n) - 1;
}

inline constexpr int popcount(Bits x) { return std::popcount(x); }

/// GF(2) inner product of two masks.
inline constexpr int parity(Bits x) { return std::popcount(x) & 1; }

/// (-1)^{<a,b>} as a double.
inline constexpr double parity_sign(Bits a, Bits b) { return parity(a & b) ? -1.0 : 1.0; }

inline constexpr int hamming_weight(Bits x) { return std::popcount(x); }

inline constexpr int hamming_distance(Bits a, Bits b) { return std::popcount(a ^ b); }

/// Text form: character i is qubit i, so qubit 0 is the leftmost character.
inline std::string to_bitstring(Bits x, unsigned n) {
    std::string s(n, '0');
    for (unsigned i = 0; i < n; ++i) {
        if ((x >> i) & 1) s[i] = '1';
    }
    return s;
}

inline Bits parse_bitstring(std::string_view s) {
    if (s.empty() || s.size() > kMaxQubits) {
        throw ArgumentError("bitstring length must be in [1, 64], got " + std::to_string(s.size()));
    }
    Bits x = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '1') {
            x |= Bits{1} << i;
        } else if (s[i] != '0') {
            throw ArgumentError("bitstring contains a character other than 0/1: '" + std::string(s) + "'");
        }
    }
    return x;
}

}  // namespace conquer
