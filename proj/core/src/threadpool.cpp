#include "ran/threadpool.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace ran {

namespace {
thread_local bool t_inside_worker = false;
}

struct ThreadPool::Impl {
    std::vector<std::thread> workers;
    std::mutex mu;
    std::condition_variable cv_work;
    std::condition_variable cv_done;

    std::function<void(int64_t)> job;
    std::atomic<int64_t> next{0};
    int64_t end = 0;
    std::atomic<int64_t> remaining{0}; // indices not yet finished
    int active = 0;                    // workers currently inside run_indices
    uint64_t generation = 0;
    bool job_open = false; // a parallel_for is in progress on the calling thread
    bool stopping = false;
    int requested_threads = 1;

    void worker_loop() {
        t_inside_worker = true;
        uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu);
                cv_work.wait(lk, [&] { return stopping || generation != seen; });
                if (stopping) return;
                seen = generation;
                ++active;
            }
            run_indices();
            {
                std::lock_guard<std::mutex> lk(mu);
                --active;
            }
            cv_done.notify_all();
        }
    }

    void run_indices() {
        for (;;) {
            int64_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= end) break;
            job(i);
            remaining.fetch_sub(1, std::memory_order_acq_rel);
        }
        cv_done.notify_all();
    }

    void stop_workers() {
        {
            std::lock_guard<std::mutex> lk(mu);
            stopping = true;
        }
        cv_work.notify_all();
        for (auto& w : workers) w.join();
        workers.clear();
        stopping = false;
    }
};

ThreadPool::ThreadPool() : impl_(new Impl) {}

ThreadPool::~ThreadPool() {
    impl_->stop_workers();
    delete impl_;
}

ThreadPool& ThreadPool::instance() {
    static ThreadPool pool;
    return pool;
}

void ThreadPool::set_threads(int n) {
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    impl_->stop_workers();
    impl_->requested_threads = n;
    // n-1 workers; the calling thread participates in every parallel_for.
    for (int i = 0; i + 1 < n; ++i) impl_->workers.emplace_back([this] { impl_->worker_loop(); });
}

int ThreadPool::threads() const { return impl_->requested_threads; }

void ThreadPool::parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    if (n == 1 || impl_->workers.empty() || t_inside_worker || impl_->job_open) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        impl_->job = fn;
        impl_->next.store(0, std::memory_order_relaxed);
        impl_->end = n;
        impl_->remaining.store(n, std::memory_order_relaxed);
        impl_->job_open = true;
        ++impl_->generation;
    }
    impl_->cv_work.notify_all();
    impl_->run_indices();
    {
        std::unique_lock<std::mutex> lk(impl_->mu);
        impl_->cv_done.wait(lk, [&] {
            return impl_->remaining.load(std::memory_order_acquire) == 0 && impl_->active == 0;
        });
        impl_->job_open = false;
        impl_->job = nullptr;
    }
}

} // namespace ran
