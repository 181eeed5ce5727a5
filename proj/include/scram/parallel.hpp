#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace scram {

/// Static partition of [begin, end) over `threads` workers. Results
/// must be written to disjoint, index-addressed output slots so the
/// outcome is identical at any thread count. threads <= 1 runs inline.
template <typename Fn>
void parallel_for(int begin, int end, int threads, Fn&& fn) {
    const int count = end - begin;
    if (count <= 0) return;
    if (threads <= 1 || count == 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }
    threads = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const int chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int lo = begin + t * chunk;
        const int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace scram
