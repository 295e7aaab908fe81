#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace vcmix {

inline unsigned default_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs body(i) for i in [0, n). Work items must be independent; each
/// writes only its own output slot, so results do not depend on the
/// schedule. The lowest-index exception is rethrown after all workers
/// join.
inline void parallel_for(long n, const std::function<void(long)>& body,
                         unsigned threads = 0) {
  if (n <= 0) return;
  if (threads == 0) threads = default_threads();
  if (threads > static_cast<unsigned>(n)) threads = static_cast<unsigned>(n);

  if (threads <= 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }

  std::atomic<long> next{0};
  std::vector<std::pair<long, std::exception_ptr>> errors(threads,
                                                          {-1, nullptr});
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (;;) {
        long i = next.fetch_add(1);
        if (i >= n) break;
        try {
          body(i);
        } catch (...) {
          if (errors[t].second == nullptr || i < errors[t].first)
            errors[t] = {i, std::current_exception()};
        }
      }
    });
  }
  for (auto& w : workers) w.join();

  long best = -1;
  std::exception_ptr err;
  for (auto& [idx, e] : errors)
    if (e && (best < 0 || idx < best)) {
      best = idx;
      err = e;
    }
  if (err) std::rethrow_exception(err);
}

}  // namespace vcmix
