#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace conquer {

/// Worker count: CONQUER_THREADS if set and positive, otherwise hardware concurrency.
inline unsigned thread_count() {
    if (const char *env = std::getenv("CONQUER_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(block) for block in [0, blocks). Blocks are the unit of determinism:
/// callers give each block its own RNG stream and output slot and reduce in
/// block order afterwards, so results do not depend on the worker count.
template <typename Fn>
void parallel_blocks(std::size_t blocks, Fn &&fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), blocks));
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) fn(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(blocks);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto &t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace conquer
