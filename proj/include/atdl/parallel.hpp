#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace atdl {

// Split [0, n) into at most `workers` contiguous chunks and run
// fn(worker_index, begin, end) on each. Each worker writes only to its own
// partial state; callers merge partials in ascending worker index, which
// makes every reduction deterministic for a fixed worker count no matter
// how the threads are scheduled.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers == 0) workers = 1;
    if (workers > n) workers = n == 0 ? 1 : n;
    if (workers <= 1) {
        fn(std::size_t{0}, std::size_t{0}, n);
        return;
    }
    const std::size_t base = n / workers, rem = n % workers;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t begin = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t len = base + (w < rem ? 1 : 0);
        const std::size_t end = begin + len;
        threads.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
        begin = end;
    }
    for (auto& t : threads) t.join();
}

std::size_t default_workers();

} // namespace atdl
