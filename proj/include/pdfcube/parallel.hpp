#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pdfcube {

/// Runs body(i) for i in [0, count) on up to `threads` workers with dynamic
/// scheduling. The first exception thrown by any task is rethrown after all
/// workers stop.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    if (count == 0) return;
    threads = std::max(1u, threads);
    if (threads == 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) return;
            const auto i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };

    const auto workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
        worker();
    }
    if (error) std::rethrow_exception(error);
}

/// Default worker count: hardware concurrency, at least 1.
[[nodiscard]] inline unsigned default_thread_count() {
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace pdfcube
