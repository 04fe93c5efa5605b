#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace slowrec {

// SLOWREC_WORKERS, else the hardware thread count.
inline int default_workers() {
  if (const char* env = std::getenv("SLOWREC_WORKERS")) {
    int w = std::atoi(env);
    if (w > 0) return w;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs body(chunk) for chunk in [0, chunks) on up to `workers` threads.
// Chunks are claimed dynamically; callers store results per chunk, so output order is fixed.
template <class Body>
void parallel_chunks(std::size_t chunks, int workers, Body&& body) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(chunks, 1))));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        body(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(chunks);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Counter-based generator: the value depends only on (seed, stream, index).
struct CounterRng {
  std::uint64_t seed = 0;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t bits(std::uint64_t index, std::uint64_t stream = 0) const {
    return mix(mix(seed ^ mix(stream)) + index);
  }
  // Uniform in (0,1); never returns 0 or 1.
  double uniform(std::uint64_t index, std::uint64_t stream = 0) const {
    return ((bits(index, stream) >> 11) + 0.5) * 0x1.0p-53;
  }
};

}  // namespace slowrec
