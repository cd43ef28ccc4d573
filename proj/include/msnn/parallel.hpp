#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace msnn {

namespace detail {
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{0}; // 0 = not yet resolved
    return cap;
}
} // namespace detail

inline int default_threads() {
    if (const char* env = std::getenv("MSNN_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

inline void set_max_threads(int n) { detail::thread_cap().store(n < 1 ? 1 : n); }

inline int max_threads() {
    int n = detail::thread_cap().load();
    if (n == 0) {
        n = default_threads();
        detail::thread_cap().store(n);
    }
    return n;
}

// Runs fn(i) for i in [0, n). Work items must write to disjoint outputs; any
// reduction internal to one i must stay inside fn. Under that contract the
// result is identical for every thread count, so --threads never changes
// numerics.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    if (n <= 0) return;
    int threads = max_threads();
    if (threads > n) threads = static_cast<int>(n);
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    for (int t = 0; t < threads; ++t) {
        std::int64_t lo = n * t / threads;
        std::int64_t hi = n * (t + 1) / threads;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                if (!failed.exchange(true)) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace msnn
