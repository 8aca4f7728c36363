#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace verifact {

/// Evaluates fn(0..n-1) on up to `jobs` threads and returns the results in
/// index order. The first exception thrown by any call is rethrown after all
/// workers finish.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t jobs, Fn&& fn) -> std::vector<std::invoke_result_t<Fn&, std::size_t>> {
    using R = std::invoke_result_t<Fn&, std::size_t>;
    std::vector<std::optional<R>> slots(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};

    auto worker = [&] {
        for (;;) {
            auto i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };

    auto threads = std::min<std::size_t>(std::max<std::size_t>(jobs, 1), n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace verifact
