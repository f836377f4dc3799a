#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace panoptic {

inline unsigned effective_threads(unsigned requested) {
    if (requested == 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : hw;
    }
    return requested;
}

/// Runs f(i) for i in [0, n) over contiguous per-thread chunks. Callers must
/// write only into slot i, which keeps results independent of the schedule.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    threads = effective_threads(threads);
    if (threads <= 1 || n < 2048) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        const std::size_t begin = n * t / workers;
        const std::size_t end = n * (t + 1) / workers;
        pool.emplace_back([&f, begin, end] {
            for (std::size_t i = begin; i < end; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace panoptic
