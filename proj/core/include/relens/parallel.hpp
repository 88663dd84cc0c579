#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "relens/errors.hpp"

namespace relens {

/// Runs fn(i) for i in [0, n) across up to `threads` workers. Work items are
/// handed out through a shared counter; callers own any output slots, so
/// results do not depend on scheduling. The first exception thrown by fn is
/// rethrown on the calling thread.
inline void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
    if (n <= 0) return;
    if (threads < 1) threads = 1;
    const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
    if (workers == 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::int64_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(n);  // stop handing out work
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline int resolve_thread_count(const std::string& spec) {
    if (spec == "auto") {
        const unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }
    try {
        std::size_t used = 0;
        const int n = std::stoi(spec, &used);
        if (used != spec.size() || n < 1)
            throw InputError("--threads must be a positive integer or \"auto\"");
        return n;
    } catch (const std::logic_error&) {
        throw InputError("--threads must be a positive integer or \"auto\"");
    }
}

}  // namespace relens
