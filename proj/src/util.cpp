#include "dmimo/util.hpp"

#include <algorithm>
#include <atomic>

namespace dmimo {

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 0) workers = default_workers();
  workers = std::min(workers, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto run = [&]() {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
}

}  // namespace dmimo
