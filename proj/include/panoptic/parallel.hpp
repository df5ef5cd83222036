#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace pk {

/// Worker count resolution: explicit request > PANOPTIC_KERNELS_THREADS env
/// var > hardware concurrency. Always at least 1.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PANOPTIC_KERNELS_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

/// Run body(begin, end) over a static partition of [0, count). Each worker
/// owns a disjoint contiguous range, so results never depend on the worker
/// count. With one thread the body runs inline.
inline void parallel_for(int count, int threads, const std::function<void(int, int)>& body) {
    threads = std::min(std::max(threads, 1), std::max(count, 1));
    if (threads == 1 || count <= 1) {
        body(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const int chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int begin = t * chunk;
        const int end = std::min(begin + chunk, count);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace pk
