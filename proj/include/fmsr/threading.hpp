#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "tensor.hpp"

namespace fmsr {

namespace detail {

/// The tape allocates and frees hundreds of >128KB tensors per step; keep
/// them on the heap instead of mmap so pages are reused across steps.
inline bool tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
    return true;
}

inline const bool allocator_tuned = tune_allocator();

}  // namespace detail

/// Worker cap from FMSR_THREADS; default 1 keeps every path deterministic.
inline int max_threads() {
    static const int cached = [] {
        const char* env = std::getenv("FMSR_THREADS");
        if (!env) return 1;
        const int v = std::atoi(env);
        return v < 1 ? 1 : v;
    }();
    return cached;
}

/// Run f(i) for i in [0, n). Work items must write to disjoint memory so the
/// result is bitwise independent of the thread count.
template <typename F>
void parallel_for(i64 n, F&& f) {
    const int nt = max_threads();
    if (nt <= 1 || n <= 1) {
        for (i64 i = 0; i < n; ++i) f(i);
        return;
    }
    const int workers = static_cast<int>(std::min<i64>(nt, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (i64 i = w; i < n; i += workers) f(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace fmsr
