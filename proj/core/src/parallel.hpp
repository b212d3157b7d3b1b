#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace seqsense::detail {

/// Runs fn over contiguous index chunks [begin, end) on up to `workers`
/// threads. Chunk boundaries depend only on (n, workers), and callers write
/// to disjoint preallocated slots, so results are identical for any worker
/// count. The first worker exception, if any, is rethrown on the caller.
inline void parallel_for(int64_t n, int workers,
                         const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int w = static_cast<int>(std::clamp<int64_t>(workers, 1, n));
    if (w == 1) {
        fn(0, n);
        return;
    }
    const int64_t chunk = (n + w - 1) / w;
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(w));
    threads.reserve(static_cast<size_t>(w));
    for (int i = 0; i < w; ++i) {
        const int64_t begin = static_cast<int64_t>(i) * chunk;
        const int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        threads.emplace_back([&, begin, end, i] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[static_cast<size_t>(i)] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace seqsense::detail
