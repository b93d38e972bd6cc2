#ifndef EVROT_PARALLEL_HPP
#define EVROT_PARALLEL_HPP

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace evrot {

/// Fixed-size thread pool used for deterministic fan-out parallelism.
///
/// Work is always split into exactly `worker_count()` contiguous chunks, so
/// per-chunk partial results can be combined in chunk order and the outcome
/// is reproducible run-to-run at equal worker counts, regardless of which
/// thread executes which chunk.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned workers) : workers_(workers == 0 ? 1 : workers) {
    for (unsigned i = 1; i < workers_; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  unsigned workers() const { return workers_; }

  /// Runs fn(chunk_index, begin, end) over [0, n) split into workers() chunks.
  /// Chunk 0 runs on the calling thread. Blocks until all chunks complete.
  void for_chunks(std::size_t n, const std::function<void(unsigned, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const unsigned c = workers_;
    if (c == 1 || n < 2 * c) {
      for (unsigned i = 0; i < c; ++i) {
        auto [b, e] = chunk_range(n, c, i);
        if (b < e) fn(i, b, e);
      }
      return;
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      job_ = &fn;
      job_n_ = n;
      next_chunk_.store(1, std::memory_order_relaxed);
      pending_ = static_cast<int>(c) - 1;
      ++generation_;
    }
    cv_.notify_all();
    auto [b0, e0] = chunk_range(n, c, 0);
    fn(0, b0, e0);
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

  static std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, unsigned chunks, unsigned i) {
    const std::size_t base = n / chunks, rem = n % chunks;
    const std::size_t b = i * base + std::min<std::size_t>(i, rem);
    return {b, b + base + (i < rem ? 1 : 0)};
  }

 private:
  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(unsigned, std::size_t, std::size_t)>* job = nullptr;
      std::size_t n = 0;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
        n = job_n_;
      }
      for (;;) {
        const unsigned i = next_chunk_.fetch_add(1, std::memory_order_relaxed);
        if (i >= workers_) break;
        auto [b, e] = chunk_range(n, workers_, i);
        if (b < e) (*job)(i, b, e);
      }
      {
        std::lock_guard<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  unsigned workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(unsigned, std::size_t, std::size_t)>* job_ = nullptr;
  std::size_t job_n_ = 0;
  std::atomic<unsigned> next_chunk_{0};
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

namespace detail {
inline unsigned& configured_workers() {
  static unsigned w = 0;  // 0 = auto
  return w;
}
}  // namespace detail

/// Sets the global worker count (0 = hardware concurrency). Must be called
/// before the first parallel region to take effect.
inline void set_worker_count(unsigned w) { detail::configured_workers() = w; }

inline unsigned worker_count() {
  unsigned w = detail::configured_workers();
  if (w == 0) {
    w = std::thread::hardware_concurrency();
    if (w == 0) w = 1;
  }
  return w;
}

/// Global pool, lazily created with the configured worker count.
inline ThreadPool& global_pool() {
  static ThreadPool pool(worker_count());
  return pool;
}

template <class Fn>
void parallel_chunks(std::size_t n, Fn&& fn) {
  const std::function<void(unsigned, std::size_t, std::size_t)> f = std::forward<Fn>(fn);
  global_pool().for_chunks(n, f);
}

}  // namespace evrot

#endif  // EVROT_PARALLEL_HPP
