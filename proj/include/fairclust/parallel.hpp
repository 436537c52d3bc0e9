#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fairclust {

// Worker count: FAIRCLUST_WORKERS env var, defaulting to the machine's
// hardware concurrency. Results never depend on this value: work is split
// into fixed-index tasks and reduced in task order.
inline int worker_count() {
    if (const char* env = std::getenv("FAIRCLUST_WORKERS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(task_index) for task_index in [0, n_tasks). Each task writes only
// to its own slot; callers reduce afterwards in index order, so the result
// is invariant to the number of workers.
inline void parallel_tasks(int n_tasks, const std::function<void(int)>& fn) {
    const int workers = std::min(worker_count(), n_tasks);
    if (workers <= 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n_tasks) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace fairclust
