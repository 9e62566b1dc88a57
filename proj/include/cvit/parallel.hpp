#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cvit {

/// Worker count from CVIT_THREADS (0 or unset = hardware concurrency).
inline std::size_t thread_count()
{
    static const std::size_t count = [] {
        std::size_t n = 0;
        if (const char* env = std::getenv("CVIT_THREADS")) n = static_cast<std::size_t>(std::strtoul(env, nullptr, 10));
        if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
        return n;
    }();
    return count;
}

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the thread count, and each index is handled by
/// exactly one call, so per-index results never depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, std::size_t min_chunk, Body&& body)
{
    const std::size_t workers = std::min(thread_count(), min_chunk == 0 ? n : n / std::max<std::size_t>(min_chunk, 1));
    if (workers <= 1) {
        if (n) body(std::size_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    const std::size_t step = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t begin = w * step;
        const std::size_t end = std::min(n, begin + step);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
    body(std::size_t{0}, std::min(n, step));
}

}  // namespace cvit
