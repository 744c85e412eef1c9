#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace unobs_lab {

/// Worker count from UNOBS_LAB_THREADS (integer >= 1); 1 when unset or
/// unparsable.
inline unsigned configured_threads() {
    const char* env = std::getenv("UNOBS_LAB_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    try {
        const long v = std::stol(env);
        return v >= 1 ? static_cast<unsigned>(v) : 1U;
    } catch (const std::exception&) {
        return 1;
    }
}

/// Calls body(i) for i in [0, count), split into contiguous blocks over
/// `threads` workers. The first exception thrown by any worker is rethrown.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t block = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * block;
        const std::size_t end = std::min(count, begin + block);
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace unobs_lab
