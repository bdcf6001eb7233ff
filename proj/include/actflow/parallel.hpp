#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace actflow {

/// Worker cap from ACTFLOW_THREADS; 0 or unset means one thread per core.
inline std::size_t worker_thread_count() {
    std::size_t cap = 0;
    if (const char* env = std::getenv("ACTFLOW_THREADS")) {
        char* end = nullptr;
        unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0') cap = static_cast<std::size_t>(v);
    }
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return cap == 0 ? hw : std::min(cap, hw);
}

/// Runs fn(i) for i in [0, n) across workers. Callers get determinism by
/// writing into per-index slots; the partition never affects results.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(worker_thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace actflow
