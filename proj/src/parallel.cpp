#include "clrnn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace clrnn {
namespace {

int default_threads() {
  if (const char* env = std::getenv("CLRNN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int> g_max_threads{0};  // 0 = uninitialized
thread_local bool tl_in_parallel = false;

struct Pool {
  std::vector<std::thread> workers;
  std::mutex mu;
  std::condition_variable cv_work;
  std::condition_variable cv_done;
  const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
  std::size_t count = 0;
  std::size_t chunk = 0;
  std::size_t nchunks = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> pending{0};
  std::atomic<std::uint64_t> generation{0};
  bool shutdown = false;

  explicit Pool(int nworkers) {
    workers.reserve(nworkers);
    for (int i = 0; i < nworkers; ++i) {
      workers.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu);
      shutdown = true;
    }
    cv_work.notify_all();
    for (auto& w : workers) w.join();
  }

  void drain() {
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= nchunks) break;
      const std::size_t begin = c * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      (*fn)(begin, end);
      pending.fetch_sub(1);
    }
  }

  void worker_loop() {
    tl_in_parallel = true;
    std::uint64_t seen = 0;
    while (true) {
      // Regions come in bursts (one per op in a forward pass); spin briefly
      // before sleeping so a burst is served without wakeup latency.
      bool got_work = false;
      for (int spin = 0; spin < 4000; ++spin) {
        if (generation.load(std::memory_order_acquire) != seen) {
          got_work = true;
          break;
        }
        std::this_thread::yield();
      }
      if (!got_work) {
        std::unique_lock<std::mutex> lock(mu);
        cv_work.wait(lock, [&] {
          return shutdown || generation.load(std::memory_order_acquire) != seen;
        });
        if (shutdown) return;
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        if (shutdown) return;
        seen = generation.load(std::memory_order_acquire);
      }
      drain();
      if (pending.load() == 0) {
        std::lock_guard<std::mutex> lock(mu);
        cv_done.notify_one();
      }
    }
  }

  void run(std::size_t n, std::size_t chunk_size, std::size_t chunks,
           const std::function<void(std::size_t, std::size_t)>& f) {
    {
      std::lock_guard<std::mutex> lock(mu);
      fn = &f;
      count = n;
      chunk = chunk_size;
      nchunks = chunks;
      next.store(0);
      pending.store(chunks);
      generation.fetch_add(1, std::memory_order_release);
    }
    cv_work.notify_all();
    tl_in_parallel = true;
    drain();
    tl_in_parallel = false;
    std::unique_lock<std::mutex> lock(mu);
    cv_done.wait(lock, [&] { return pending.load() == 0; });
  }
};

Pool& pool() {
  static Pool p(std::max(1, default_threads() - 1));
  return p;
}

}  // namespace

int max_threads() {
  int v = g_max_threads.load();
  if (v == 0) {
    v = default_threads();
    g_max_threads.store(v);
  }
  return v;
}

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain) {
  if (count == 0) return;
  const int threads = max_threads();
  // Nested calls run inline; the pool handles one task at a time.
  if (threads <= 1 || count <= grain || tl_in_parallel) {
    fn(0, count);
    return;
  }
  const std::size_t want =
      std::min<std::size_t>(threads, (count + grain - 1) / grain);
  if (want <= 1) {
    fn(0, count);
    return;
  }
  const std::size_t chunk = (count + want - 1) / want;
  const std::size_t chunks = (count + chunk - 1) / chunk;
  pool().run(count, chunk, chunks, fn);
}

void parallel_for_blocks(
    std::size_t count, std::size_t block,
    const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  block = std::max<std::size_t>(1, block);
  const int threads = max_threads();
  if (threads <= 1 || count <= block || tl_in_parallel) {
    for (std::size_t b0 = 0; b0 < count; b0 += block) {
      fn(b0, std::min(count, b0 + block));
    }
    return;
  }
  const std::size_t chunks = (count + block - 1) / block;
  pool().run(count, block, chunks, fn);
}

}  // namespace clrnn
