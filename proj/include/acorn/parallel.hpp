#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace acorn {

/// Applies `fn` to every item on up to `concurrency` threads. Results come
/// back in input order. The first exception (by index) is rethrown after all
/// workers have joined.
template <typename In, typename Fn>
auto parallel_map(std::vector<In>& items, std::size_t concurrency, Fn&& fn) {
  using Out = std::invoke_result_t<Fn&, In&>;
  std::vector<std::optional<Out>> slots(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        slots[i].emplace(fn(items[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t n_threads = std::min(std::max<std::size_t>(concurrency, 1), items.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  std::vector<Out> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

}  // namespace acorn
