#pragma once

#include <algorithm>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rmt {

// Runs fn(i) for i in [0, count). Work items write to their own slots;
// callers reduce serially in index order, so results do not depend on the
// thread count.
inline void parallel_for(long count, int threads, const std::function<void(long)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    const int k = static_cast<int>(std::min<long>(threads, count));
    std::vector<std::thread> pool;
    pool.reserve(k);
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (int t = 0; t < k; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (long i = t; i < count; i += k) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rmt
