#pragma once

// Deterministic parallel reduction for Monte Carlo drivers. Work is cut into
// fixed-size blocks of path indices; each block is reduced sequentially and the
// block results are merged pairwise in index order. The result depends on the
// block size only, never on the number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace volterra_lab::mc {

inline constexpr std::size_t kBlockSize = 256;

/// Count, mean and centred second moment with Chan's merge rule.
struct MomentStats {
    double count = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        count += 1.0;
        const double d = x - mean;
        mean += d / count;
        m2 += d * (x - mean);
    }

    void merge(const MomentStats& o) {
        if (o.count == 0.0) return;
        if (count == 0.0) {
            *this = o;
            return;
        }
        const double n = count + o.count;
        const double d = o.mean - mean;
        mean += d * o.count / n;
        m2 += o.m2 + d * d * count * o.count / n;
        count = n;
    }

    double variance() const { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
    double stderr_mean() const { return count > 1.0 ? std::sqrt(variance() / count) : 0.0; }
};

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Reduces `n_items` items. `make()` creates an empty accumulator, `step(acc, i)`
/// folds item i into it, and `Acc::merge(const Acc&)` combines accumulators.
template <class Acc, class Make, class Step>
Acc block_reduce(std::size_t n_items, std::size_t threads, Make make, Step step,
                 std::size_t block_size = kBlockSize) {
    const std::size_t n_blocks = (n_items + block_size - 1) / block_size;
    std::vector<Acc> blocks;
    blocks.reserve(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) blocks.push_back(make());

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::atomic_flag error_set = ATOMIC_FLAG_INIT;

    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks || failed.load()) return;
            try {
                const std::size_t lo = b * block_size;
                const std::size_t hi = std::min(n_items, lo + block_size);
                for (std::size_t i = lo; i < hi; ++i) step(blocks[b], i);
            } catch (...) {
                if (!error_set.test_and_set()) error = std::current_exception();
                failed = true;
                return;
            }
        }
    };

    const std::size_t n_threads = std::min(resolve_threads(threads), std::max<std::size_t>(1, n_blocks));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    // Pairwise merge in block order.
    std::size_t width = 1;
    while (width < blocks.size()) {
        for (std::size_t i = 0; i + width < blocks.size(); i += 2 * width) blocks[i].merge(blocks[i + width]);
        width *= 2;
    }
    return blocks.empty() ? make() : std::move(blocks.front());
}

}  // namespace volterra_lab::mc
