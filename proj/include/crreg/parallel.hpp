#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace crreg {

/// How work items are handed to workers. Both schedules produce identical
/// results when each item's output is owned by exactly one item.
enum class Schedule {
    Static,  ///< contiguous equal chunks, chunk w -> worker w
    Dynamic, ///< workers claim fixed-size chunks from a shared counter
};

/// Runs body(begin, end, worker) over [0, n). Exceptions thrown by workers
/// are rethrown on the calling thread (first one wins).
template <class Body>
void parallel_for(std::size_t n, int workers, Body &&body, Schedule schedule = Schedule::Static) {
    if (n == 0) {
        return;
    }
    const auto nw = static_cast<std::size_t>(std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, n));
    if (nw == 1) {
        body(std::size_t{0}, n, 0);
        return;
    }

    std::exception_ptr error;
    std::mutex error_mutex;
    auto guarded = [&](auto &&fn) {
        try {
            fn();
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) {
                error = std::current_exception();
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(nw);
    if (schedule == Schedule::Static) {
        for (std::size_t w = 0; w < nw; ++w) {
            const std::size_t begin = n * w / nw;
            const std::size_t end = n * (w + 1) / nw;
            threads.emplace_back([&, begin, end, w] { guarded([&] { body(begin, end, static_cast<int>(w)); }); });
        }
    } else {
        const std::size_t chunk = std::max<std::size_t>(1, n / (nw * 16));
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < nw; ++w) {
            threads.emplace_back([&, w] {
                guarded([&] {
                    for (;;) {
                        const std::size_t begin = next.fetch_add(chunk);
                        if (begin >= n) {
                            break;
                        }
                        body(begin, std::min(n, begin + chunk), static_cast<int>(w));
                    }
                });
            });
        }
    }
    for (auto &t : threads) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

inline int hardware_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

} // namespace crreg
