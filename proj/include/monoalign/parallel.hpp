#pragma once

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace monoalign {

// Runs fn(0..n-1) across up to `jobs` threads. Callers index into
// preallocated slots, so results land in a deterministic order regardless of
// the worker count. The first exception is rethrown after the join.
template <typename F>
void parallel_for(int n, int jobs, F&& fn) {
    if (n <= 0) return;
    const int workers = std::min(jobs < 1 ? 1 : jobs, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w]() {
            for (int i = w; i < n; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace monoalign
