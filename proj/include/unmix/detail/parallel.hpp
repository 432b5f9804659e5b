#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace unmix::detail {

/// Runs fn(0..n-1) over a fixed block partition. Each index owns its output
/// slot, so results are identical for every worker count.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw ? static_cast<int>(hw) : 1;
    }
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            const int begin = t * chunk;
            const int end = std::min(n, begin + chunk);
            try {
                for (int i = begin; i < end; ++i) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& error : errors) {
        if (error) std::rethrow_exception(error);
    }
}

}  // namespace unmix::detail
