#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <span>

#include "conquer/errors.hpp"
#include "conquer/parallel.hpp"

namespace conquer {

/// In-place unnormalized fast Walsh-Hadamard transform:
///   out[x] = sum_w (-1)^{popcount(x & w)} in[w].
/// Length must be a power of two. Applying it twice multiplies by the length.
template <typename T>
void fwht(std::span<T> a) {
    const std::size_t size = a.size();
    if (size == 0 || !std::has_single_bit(size)) throw ArgumentError("fwht length must be a power of two");
    constexpr std::size_t kBlock = std::size_t{1} << 14;
    // Low strides stay inside a block; each block is transformed independently.
    const std::size_t local = std::min(size, kBlock);
    parallel_blocks(size / local, [&](std::size_t b) {
        T *p = a.data() + b * local;
        for (std::size_t h = 1; h < local; h <<= 1) {
            for (std::size_t i = 0; i < local; i += h << 1) {
                for (std::size_t j = i; j < i + h; ++j) {
                    const T u = p[j];
                    const T v = p[j + h];
                    p[j] = u + v;
                    p[j + h] = u - v;
                }
            }
        }
    });
    for (std::size_t h = local; h < size; h <<= 1) {
        // Butterflies of one stride split into independent chunks of kBlock pairs.
        const std::size_t pairs = size / 2;
        parallel_blocks(pairs / kBlock, [&](std::size_t chunk) {
            for (std::size_t t = chunk * kBlock; t < (chunk + 1) * kBlock; ++t) {
                const std::size_t j = (t / h) * (h << 1) + (t % h);
                const T u = a[j];
                const T v = a[j + h];
                a[j] = u + v;
                a[j + h] = u - v;
            }
        });
    }
}

}  // namespace conquer
