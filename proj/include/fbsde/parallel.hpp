#pragma once

// Chunked parallel loop with worker-count-independent results. Work is cut
// into fixed-size chunks (boundaries depend only on the item count), each
// chunk writes to its own slots, and any reduction happens sequentially in
// chunk order afterwards. Running with 1 or 16 threads therefore produces
// identical bytes.

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace fbsde {

constexpr std::size_t kChunkSize = 2048;

inline std::size_t chunk_count(std::size_t n_items) { return (n_items + kChunkSize - 1) / kChunkSize; }

inline unsigned resolve_threads(int requested) {
    if (requested > 0) return static_cast<unsigned>(requested);
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// fn(chunk_index, begin, end) must only touch state owned by that chunk.
inline void for_each_chunk(std::size_t n_items, int threads,
                           const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    const std::size_t chunks = chunk_count(n_items);
    if (chunks == 0) return;
    unsigned workers = resolve_threads(threads);
    if (workers > chunks) workers = static_cast<unsigned>(chunks);

    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) {
            std::size_t b = c * kChunkSize;
            std::size_t e = std::min(n_items, b + kChunkSize);
            fn(c, b, e);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&]() {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= chunks || failed.load()) return;
            std::size_t b = c * kChunkSize;
            std::size_t e = std::min(n_items, b + kChunkSize);
            try {
                fn(c, b, e);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed.load() && error) std::rethrow_exception(error);
}

} // namespace fbsde
