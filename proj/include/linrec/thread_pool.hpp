#pragma once

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "linrec/common.hpp"

namespace linrec {

/// Fixed pool of W workers executing indexed task batches. parallel_for
/// blocks until every index has run (the phase barrier); task results must
/// go to disjoint slots, which keeps outputs independent of scheduling.
/// The calling thread counts as worker 0, so size()==1 runs inline.
class ThreadPool {
 public:
  explicit ThreadPool(int workers);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int size() const { return workers_; }

  void parallel_for(index_t n, const std::function<void(index_t)>& fn);

  static int hardware_workers() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : int(n);
  }

 private:
  void worker_loop();
  void run_tasks();

  int workers_ = 1;
  std::vector<std::thread> threads_;  // workers_ - 1 helpers

  std::mutex m_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  std::uint64_t generation_ = 0;
  bool stop_ = false;

  const std::function<void(index_t)>* fn_ = nullptr;
  index_t task_count_ = 0;
  index_t next_task_ = 0;
  index_t completed_ = 0;
  std::exception_ptr first_error_;
};

}  // namespace linrec
