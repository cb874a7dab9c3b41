#include "planter/threading.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace planter::threading {

namespace {

// True while this thread is executing items of a parallel region, whether it
// is a pool worker or the caller working its own lane. Nested parallel_for
// calls from such a thread run inline: the pool supports one region at a
// time, and re-entering it from the region's own caller would deadlock.
thread_local bool inside_region = false;

int default_thread_count() {
    if (const char* env = std::getenv("PLANTER_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw);
}

std::atomic<int> requested_threads{0};  // 0 = unset, fall back to default

class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_work_.notify_all();
        for (auto& t : threads_) t.join();
    }

    /// One parallel region at a time; the calling thread works alongside the pool.
    void run(int count, const std::function<void(int)>& fn) {
        std::lock_guard<std::mutex> run_lock(run_mu_);
        {
            std::lock_guard<std::mutex> lock(mu_);
            fn_ = &fn;
            count_ = count;
            next_.store(0, std::memory_order_relaxed);
            busy_ = int(threads_.size());
            err_ = nullptr;
            ++generation_;
        }
        cv_work_.notify_all();
        inside_region = true;
        int i;
        while ((i = next_.fetch_add(1, std::memory_order_relaxed)) < count) {
            try {
                fn(i);
            } catch (...) {
                record_error();
            }
        }
        inside_region = false;
        std::unique_lock<std::mutex> lock(mu_);
        cv_done_.wait(lock, [this] { return busy_ == 0; });
        fn_ = nullptr;
        if (err_) {
            std::exception_ptr e = err_;
            err_ = nullptr;
            lock.unlock();
            std::rethrow_exception(e);
        }
    }

private:
    void worker_loop() {
        inside_region = true;
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(int)>* fn;
            int count;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_work_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                fn = fn_;
                count = count_;
            }
            int i;
            while ((i = next_.fetch_add(1, std::memory_order_relaxed)) < count) {
                try {
                    (*fn)(i);
                } catch (...) {
                    record_error();
                }
            }
            {
                std::lock_guard<std::mutex> lock(mu_);
                if (--busy_ == 0) cv_done_.notify_all();
            }
        }
    }

    // First exception from any lane; remaining items are skipped and the
    // region's caller rethrows it once the workers drain.
    void record_error() {
        std::lock_guard<std::mutex> lock(mu_);
        if (!err_) err_ = std::current_exception();
        next_.store(count_, std::memory_order_relaxed);
    }

    std::vector<std::thread> threads_;
    std::mutex mu_, run_mu_;
    std::condition_variable cv_work_, cv_done_;
    const std::function<void(int)>* fn_ = nullptr;
    int count_ = 0;
    std::atomic<int> next_{0};
    int busy_ = 0;
    std::uint64_t generation_ = 0;
    std::exception_ptr err_;
    bool stop_ = false;
};

std::once_flag pool_once;
Pool* pool_instance = nullptr;
int pool_threads = 1;

Pool& pool() {
    std::call_once(pool_once, [] {
        int want = requested_threads.load();
        pool_threads = want >= 1 ? want : default_thread_count();
        pool_instance = new Pool(pool_threads - 1);  // caller thread is the extra lane
    });
    return *pool_instance;
}

}  // namespace

int thread_count() {
    pool();
    return pool_threads;
}

void set_thread_count(int n) {
    if (n >= 1) requested_threads.store(n);
}

void parallel_for(int count, const std::function<void(int)>& fn) {
    if (count <= 0) return;
    if (inside_region || count == 1 || thread_count() == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    pool().run(count, fn);
}

}  // namespace planter::threading
