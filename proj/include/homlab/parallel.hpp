#ifndef HOMLAB_PARALLEL_HPP
#define HOMLAB_PARALLEL_HPP

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace homlab {

// Static-chunked parallel loop. Work item i always lands in the same output
// slot, so results do not depend on the worker count.
inline void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
  if (threads < 1) threads = 1;
  const long hw = static_cast<long>(std::thread::hardware_concurrency());
  if (hw > 0 && threads > hw) threads = static_cast<int>(hw);
  if (threads == 1 || n < 2) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const long t_count = std::min<long>(threads, n);
  for (long t = 0; t < t_count; ++t) {
    const long begin = t * n / t_count;
    const long end = (t + 1) * n / t_count;
    pool.emplace_back([&, begin, end] {
      try {
        for (long i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace homlab

#endif
