#pragma once

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pathbsde {

/// Worker-pool width used by all data-parallel loops. Defaults to the
/// PATHDEP_THREADS environment variable, else 1.
inline int& thread_count_ref() {
    static int n = [] {
        if (const char* env = std::getenv("PATHDEP_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        return 1;
    }();
    return n;
}

inline int thread_count() { return thread_count_ref(); }
inline void set_thread_count(int n) { thread_count_ref() = n < 1 ? 1 : n; }

/// Items are split into fixed-size blocks and blocks are handed to workers.
/// The block layout depends only on n_items, never on the worker count, so
/// any per-block partial results folded in block order are bit-identical
/// across thread counts.
inline constexpr std::size_t kParallelBlock = 4096;

inline std::size_t block_count(std::size_t n_items, std::size_t block = kParallelBlock) {
    return n_items == 0 ? 0 : (n_items + block - 1) / block;
}

/// Runs fn(block_index, begin, end) for every block. Exceptions thrown by
/// workers are rethrown (first one wins) after all workers join.
template <class Fn>
void parallel_blocks(std::size_t n_items, Fn&& fn, std::size_t block = kParallelBlock) {
    const std::size_t n_blocks = block_count(n_items, block);
    if (n_blocks == 0) return;

    const int workers = std::min<std::size_t>(thread_count(), n_blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b)
            fn(b, b * block, std::min(n_items, (b + 1) * block));
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks || failed.load()) return;
            try {
                fn(b, b * block, std::min(n_items, (b + 1) * block));
            } catch (...) {
                std::scoped_lock lk(error_mutex);
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

/// Ordered map-reduce over blocks: partial results are produced in parallel
/// and folded sequentially in block order (deterministic for any pool size).
template <class Partial, class MapFn, class FoldFn>
Partial parallel_reduce(std::size_t n_items, Partial init, MapFn&& map, FoldFn&& fold,
                        std::size_t block = kParallelBlock) {
    const std::size_t n_blocks = block_count(n_items, block);
    std::vector<Partial> partials(n_blocks, init);
    parallel_blocks(
        n_items,
        [&](std::size_t b, std::size_t begin, std::size_t end) { partials[b] = map(begin, end); },
        block);
    Partial acc = init;
    for (const Partial& p : partials) acc = fold(acc, p);
    return acc;
}

}  // namespace pathbsde
