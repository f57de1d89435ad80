#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace numod {

/// Runs fn(i) for i in [0,n) on up to `threads` workers using contiguous
/// static chunks. fn must only write to slot i so results stay order-stable.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, std::size_t(std::max(1, threads)));
    if(workers <= 1) {
        for(std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for(std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t end = std::min(n, (w + 1) * chunk);
                for(std::size_t i = w * chunk; i < end; ++i)
                    fn(i);
            } catch(...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for(auto& t : pool)
        t.join();
    for(auto& e : errors)
        if(e)
            std::rethrow_exception(e);
}

} // namespace numod
