#ifndef LYMPHNET_PARALLEL_HPP
#define LYMPHNET_PARALLEL_HPP

#include <cstddef>
#include <thread>
#include <vector>

namespace lymphnet {

// Runs fn(i) for i in [0, n) over static contiguous chunks. Callers own any
// reduction; to keep results invariant under the thread count, reductions
// over per-i partial results must walk i in ascending order afterwards.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (threads > n) threads = static_cast<unsigned>(n);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t lo = static_cast<std::size_t>(t) * chunk;
        if (lo >= n) break;
        const std::size_t hi = lo + chunk < n ? lo + chunk : n;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace lymphnet

#endif
