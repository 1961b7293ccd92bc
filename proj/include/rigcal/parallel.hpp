#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rigcal {

// Runs fn(0..n-1) on up to `workers` threads. Tasks must write only to their
// own output slots; results are then independent of the worker count, which
// keeps multi-worker runs bit-identical to single-threaded ones.
inline void parallel_for(int n, int workers, const std::function<void(int)> &fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&] {
        for (int i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min(workers, n);
    pool.reserve(count);
    for (int w = 0; w < count; ++w) pool.emplace_back(run);
    for (auto &t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rigcal
