#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace hemalimit {

/// Worker count from HEMALIMIT_WORKERS, else the hardware concurrency.
int default_workers();

/// Evaluates map(i) for i in [0, count) on up to `workers` threads and feeds
/// the results to reduce(i, result) strictly in increasing i. Work proceeds
/// in batches so at most a few results per worker are held at once.
template <class Map, class Reduce>
void ordered_map_reduce(std::size_t count, int workers, Map&& map, Reduce&& reduce) {
  using Result = decltype(map(std::size_t{0}));
  if (workers <= 0) workers = default_workers();
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(workers) * 4);

  std::vector<std::optional<Result>> slots(batch);
  for (std::size_t begin = 0; begin < count; begin += batch) {
    const std::size_t end = std::min(count, begin + batch);
    if (workers == 1 || end - begin == 1) {
      for (std::size_t i = begin; i < end; ++i) slots[i - begin].emplace(map(i));
    } else {
      std::atomic<std::size_t> next{begin};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      auto run = [&] {
        for (std::size_t i = next++; i < end; i = next++) {
          try {
            slots[i - begin].emplace(map(i));
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      };
      const std::size_t spawn = std::min<std::size_t>(static_cast<std::size_t>(workers), end - begin);
      std::vector<std::jthread> pool;
      pool.reserve(spawn);
      for (std::size_t w = 0; w < spawn; ++w) pool.emplace_back(run);
      pool.clear();
      if (failure) std::rethrow_exception(failure);
    }
    for (std::size_t i = begin; i < end; ++i) {
      reduce(i, std::move(*slots[i - begin]));
      slots[i - begin].reset();
    }
  }
}

}  // namespace hemalimit
