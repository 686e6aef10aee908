#include "gflow/parallel.hpp"

#include <atomic>

namespace gflow {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) {
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  g_max_threads.store(n);
}

int max_threads() { return g_max_threads.load(); }

}  // namespace gflow
