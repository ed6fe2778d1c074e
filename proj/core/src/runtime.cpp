#include "tresnet/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace tresnet::runtime {

namespace {

int initial_thread_count() {
    if (const char* env = std::getenv("TRESNET_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int>& thread_count_storage() {
    static std::atomic<int> count{initial_thread_count()};
    return count;
}

}  // namespace

int thread_count() { return thread_count_storage().load(std::memory_order_relaxed); }

void set_thread_count(int n) {
    thread_count_storage().store(std::max(1, n), std::memory_order_relaxed);
}

void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& fn,
                  int64_t min_parallel_range) {
    const int64_t range = end - begin;
    if (range <= 0) return;

    const int workers = std::min<int64_t>(thread_count(), range);
    if (workers <= 1 || range < min_parallel_range) {
        fn(begin, end);
        return;
    }

    const int64_t chunk = (range + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) {
        const int64_t lo = begin + w * chunk;
        const int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(begin, std::min(end, begin + chunk));
    for (auto& t : pool) t.join();
}

}  // namespace tresnet::runtime
