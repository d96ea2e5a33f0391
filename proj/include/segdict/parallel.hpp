#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace segdict {

/// Worker count: hardware concurrency, capped by SEGDICT_THREADS when set.
inline unsigned thread_count()
{
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SEGDICT_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1)
                n = std::min(n, static_cast<unsigned>(cap));
        } catch (...) {
        }
    }
    return n;
}

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so callers writing to slot i get scheduling-independent results. The first
/// exception thrown (lowest index) is rethrown after all workers finish.
template <class Body>
void parallel_for(std::ptrdiff_t n, Body&& body)
{
    const unsigned workers = std::min<unsigned>(thread_count(), static_cast<unsigned>(std::max<std::ptrdiff_t>(n, 1)));
    if (workers <= 1) {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            body(i);
        return;
    }

    std::mutex mutex;
    std::exception_ptr first_error;
    std::ptrdiff_t first_index = n;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::ptrdiff_t i = w; i < n; i += workers) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(mutex);
                    if (i < first_index) {
                        first_index = i;
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

}  // namespace segdict
