#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace neuronal::detail {

// Runs fn(i) for i in [0, n) across up to `threads` workers. Worker t takes
// the strided indices t, t+T, t+2T, ...; each fn(i) must write only to its
// own slot so results are independent of scheduling. The lowest-index
// exception wins and is rethrown after all workers join.
template <class Fn>
void parallel_indexed(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t T = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> workers;
    workers.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        workers.emplace_back([&, t]() {
            for (std::size_t i = t; i < n; i += T) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
    }
}

}  // namespace neuronal::detail
