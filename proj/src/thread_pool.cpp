#include "linrec/thread_pool.hpp"

namespace linrec {

ThreadPool::ThreadPool(int workers) : workers_(workers) {
  if (workers < 1) contract_fail("ThreadPool: worker count must be >= 1");
  threads_.reserve(size_t(workers - 1));
  for (int i = 0; i < workers - 1; ++i)
    threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lk(m_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::worker_loop() {
  std::uint64_t seen = 0;
  for (;;) {
    {
      std::unique_lock<std::mutex> lk(m_);
      cv_work_.wait(lk, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
    }
    run_tasks();
  }
}

void ThreadPool::run_tasks() {
  for (;;) {
    index_t i;
    {
      std::lock_guard<std::mutex> lk(m_);
      if (next_task_ >= task_count_) return;
      i = next_task_++;
    }
    try {
      (*fn_)(i);
    } catch (...) {
      std::lock_guard<std::mutex> lk(m_);
      if (!first_error_) first_error_ = std::current_exception();
    }
    {
      std::lock_guard<std::mutex> lk(m_);
      if (++completed_ == task_count_) {
        cv_done_.notify_all();
        return;
      }
    }
  }
}

void ThreadPool::parallel_for(index_t n,
                              const std::function<void(index_t)>& fn) {
  if (n <= 0) return;
  if (workers_ == 1 || n == 1) {
    for (index_t i = 0; i < n; ++i) fn(i);
    return;
  }
  {
    std::lock_guard<std::mutex> lk(m_);
    fn_ = &fn;
    task_count_ = n;
    next_task_ = 0;
    completed_ = 0;
    first_error_ = nullptr;
    ++generation_;
  }
  cv_work_.notify_all();
  run_tasks();  // the caller is worker 0
  {
    std::unique_lock<std::mutex> lk(m_);
    cv_done_.wait(lk, [&] { return completed_ == task_count_; });
    fn_ = nullptr;
    if (first_error_) std::rethrow_exception(first_error_);
  }
}

}  // namespace linrec
