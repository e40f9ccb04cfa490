#pragma once

#include <cstdint>
#include <functional>

namespace ran {

/// Process-wide worker pool. Work items must write only to their own output
/// slot; with that contract every schedule (any thread count, including 1)
/// produces identical results. Nested parallel_for calls from inside a worker
/// run inline.
class ThreadPool {
public:
    static ThreadPool& instance();

    /// Set worker count (>= 1). 0 means hardware concurrency.
    void set_threads(int n);
    int threads() const;

    void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

private:
    ThreadPool();
    ~ThreadPool();
    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    struct Impl;
    Impl* impl_;
};

/// Convenience wrapper over the global pool.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    ThreadPool::instance().parallel_for(n, fn);
}

} // namespace ran
