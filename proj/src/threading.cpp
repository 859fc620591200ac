#include "svae/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace svae::threading {

namespace {

int read_worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("SVAE_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) return std::min(hw, cap);
  }
  return hw;
}

std::atomic<int> g_worker_cap{0};

}  // namespace

int worker_count() {
  static const int env_count = read_worker_count();
  const int cap = g_worker_cap.load(std::memory_order_relaxed);
  return cap >= 1 ? cap : env_count;
}

void set_worker_cap(int cap) { g_worker_cap.store(cap, std::memory_order_relaxed); }

void parallel_for(int64_t begin, int64_t end, int64_t grain,
                  const std::function<void(int64_t, int64_t)>& body) {
  const int64_t n = end - begin;
  if (n <= 0) return;
  if (grain < 1) grain = 1;
  const int64_t max_chunks = (n + grain - 1) / grain;
  const int workers = static_cast<int>(std::min<int64_t>(worker_count(), max_chunks));
  if (workers <= 1) {
    body(begin, end);
    return;
  }

  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  std::mutex error_mutex;
  std::exception_ptr error;

  auto run = [&](int64_t b, int64_t e) {
    try {
      body(b, e);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };

  for (int w = 1; w < workers; ++w) {
    const int64_t b = begin + w * chunk;
    const int64_t e = std::min(end, b + chunk);
    if (b >= e) break;
    threads.emplace_back(run, b, e);
  }
  run(begin, std::min(end, begin + chunk));
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace svae::threading
