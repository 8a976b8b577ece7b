// Copyright Contributors to the lensfield project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lensfield {

/// Number of workers used when not in serial mode.
inline int worker_count(bool serial) {
    if (serial)
        return 1;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, count) into contiguous static chunks, one per worker, and calls
/// body(begin, end, worker). Chunk boundaries depend only on `count` and the
/// worker count, so per-worker accumulators merged in worker order give
/// reproducible sums for a fixed worker count. The first exception thrown by
/// any worker is rethrown after all workers join.
inline void parallel_for(size_t count, int workers, const std::function<void(size_t, size_t, int)> &body) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<size_t>(count, 1))));
    if (workers == 1) {
        body(0, count, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const size_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const size_t begin = std::min(count, w * chunk);
        const size_t end = std::min(count, begin + chunk);
        pool.emplace_back([&, begin, end, w] {
            try {
                body(begin, end, w);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    for (auto &t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

} // namespace lensfield
