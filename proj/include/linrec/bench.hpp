#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <new>
#include <ostream>
#include <string>
#include <vector>

#include "linrec/layers.hpp"
#include "linrec/recurrence.hpp"
#include "linrec/rng.hpp"

namespace linrec {

struct BenchConfig {
  std::vector<index_t> seq_lens = {16, 256, 4096, 65536};
  std::vector<index_t> features = {32};
  std::vector<index_t> batches = {1};
  std::vector<int> worker_counts = {1, 2, 4, 8};
  index_t warmup = 3;
  index_t reps = 10;
  uint64_t seed = 0;

  // model preset: two layers, bT held constant across rows
  index_t model_hidden = 256;
  index_t model_input = 4;
  index_t model_bt = 65536;

  // grid points whose estimated footprint exceeds this are skipped
  size_t mem_budget_bytes = size_t(4) << 30;

  void validate() const {
    require(!seq_lens.empty() && !features.empty() && !batches.empty() &&
                !worker_counts.empty(),
            "bench config: all grid lists must be non-empty");
    require(warmup >= 0 && reps >= 1, "bench config: reps must be >= 1");
    for (auto T : seq_lens) require(T >= 1, "bench config: T must be >= 1");
    for (auto n : features) require(n >= 1, "bench config: n must be >= 1");
    for (auto b : batches) require(b >= 1, "bench config: b must be >= 1");
    for (auto w : worker_counts)
      require(w >= 1, "bench config: workers must be >= 1");
  }
};

struct BenchRecord {
  index_t T = 0, n = 0, b = 0;
  int workers = 1;
  std::string impl;            // "serial" or "parallel"
  double events_per_sec = 0;   // b*T*reps / seconds
  double speedup = 1.0;        // vs the serial record at the same grid point
  double seconds = 0;          // median rep time scaled by rep count
  index_t reps = 0;
  uint64_t input_checksum = 0;
  bool skipped = false;
  std::string warning;
};

/// Analytical speedup of the chunked scan: p*T / (3*(T + log2 p)).
inline double predicted_speedup(int p, index_t T) {
  require(p >= 1 && T >= 1, "predicted_speedup: p and T must be >= 1");
  return double(p) * double(T) / (3.0 * (double(T) + std::log2(double(p))));
}

namespace detail {

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <class S>
uint64_t checksum_inputs(const RecurrenceInput<S>& in) {
  uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64(in.decays.data.data(), in.decays.data.size() * sizeof(S), h);
  h = fnv1a64(in.impulses.data.data(), in.impulses.data.size() * sizeof(S), h);
  h = fnv1a64(in.initial.data.data(), in.initial.data.size() * sizeof(S), h);
  return h;
}

inline double median_of(std::vector<double> times) {
  std::sort(times.begin(), times.end());
  const size_t mid = times.size() / 2;
  return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

/// Median rep time in seconds for `body`, after `warmup` untimed calls.
template <class F>
double median_rep_seconds(index_t warmup, index_t reps, F&& body) {
  for (index_t i = 0; i < warmup; ++i) body();
  std::vector<double> times;
  times.reserve(size_t(reps));
  for (index_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    times.push_back(std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count());
  }
  return median_of(std::move(times));
}

/// A/B timing with the reps of the two bodies interleaved, so a slow
/// stretch of the machine inflates both streams instead of whichever
/// block it landed on. Medians are still per stream.
template <class FA, class FB>
std::pair<double, double> median_paired_seconds(index_t warmup, index_t reps,
                                                FA&& a, FB&& b) {
  for (index_t i = 0; i < warmup; ++i) {
    a();
    b();
  }
  std::vector<double> ta, tb;
  ta.reserve(size_t(reps));
  tb.reserve(size_t(reps));
  for (index_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    a();
    const auto t1 = std::chrono::steady_clock::now();
    b();
    const auto t2 = std::chrono::steady_clock::now();
    ta.push_back(std::chrono::duration<double>(t1 - t0).count());
    tb.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  return {median_of(std::move(ta)), median_of(std::move(tb))};
}

template <class S>
RecurrenceInput<S> random_recurrence(Rng& rng, index_t T, index_t b,
                                     index_t n) {
  RecurrenceInput<S> in{Tensor3<S>(T, b, n), Tensor3<S>(T, b, n),
                        Tensor2<S>(b, n)};
  for (auto& v : in.decays.data) v = S(rng.uniform(0.05, 0.95));
  fill_uniform(rng, in.impulses, -1.0, 1.0);
  fill_uniform(rng, in.initial, -1.0, 1.0);
  return in;
}

inline BenchRecord skip_record(index_t T, index_t n, index_t b, int w,
                               const std::string& impl, std::string why) {
  BenchRecord r;
  r.T = T;
  r.n = n;
  r.b = b;
  r.workers = w;
  r.impl = impl;
  r.skipped = true;
  r.warning = std::move(why);
  return r;
}

}  // namespace detail

/// Times scan_serial vs scan_parallel on identical inputs at every grid
/// point. Generation is outside the timed region; each record reports the
/// median of `reps` timed runs. Row order follows the grid.
template <class S>
std::vector<BenchRecord> bench_kernel(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<BenchRecord> records;
  Rng root(cfg.seed);
  index_t point = 0;

  for (index_t T : cfg.seq_lens)
    for (index_t n : cfg.features)
      for (index_t b : cfg.batches)
        for (int w : cfg.worker_counts) {
          const index_t idx = point++;
          // inputs + output + parallel working set
          const size_t estimate =
              sizeof(S) * size_t(T) * size_t(b) * size_t(n) * 5;
          if (estimate > cfg.mem_budget_bytes) {
            records.push_back(detail::skip_record(
                T, n, b, w, "both",
                "estimated footprint " + std::to_string(estimate >> 20) +
                    " MiB exceeds budget"));
            continue;
          }
          try {
            Rng rng = root.split(1000 + idx);
            auto in = detail::random_recurrence<S>(rng, T, b, n);
            const uint64_t sum = detail::checksum_inputs(in);

            Tensor3<S> h_serial(T, b, n), h_parallel(T, b, n);
            const double serial_rep = detail::median_rep_seconds(
                cfg.warmup, cfg.reps, [&] {
                  h_serial = scan_serial(in.decays, in.impulses, in.initial);
                });

            ThreadPool pool(w);
            const ChunkPlan plan = plan_chunks(T, w);
            const double parallel_rep = detail::median_rep_seconds(
                cfg.warmup, cfg.reps, [&] {
                  h_parallel = scan_parallel(in.decays, in.impulses,
                                             in.initial, plan, pool);
                });

            // correctness guard: the serial kernel is the oracle
            const double tol = sizeof(S) == 4 ? 2e-4 : 1e-9;
            double worst = 0, scale = 0;
            for (size_t i = 0; i < h_serial.data.size(); ++i) {
              worst = std::max(
                  worst, std::fabs(double(h_serial.data[i]) -
                                   double(h_parallel.data[i])));
              scale = std::max(scale, std::fabs(double(h_serial.data[i])));
            }
            if (worst > tol * std::max(scale, 1.0))
              contract_fail(
                  "bench_kernel: serial/parallel disagreement at T=" +
                  std::to_string(T));

            const double events = double(b) * double(T) * double(cfg.reps);
            BenchRecord s;
            s.T = T;
            s.n = n;
            s.b = b;
            s.workers = w;
            s.impl = "serial";
            s.reps = cfg.reps;
            s.seconds = serial_rep * double(cfg.reps);
            s.events_per_sec = events / s.seconds;
            s.speedup = 1.0;
            s.input_checksum = sum;

            BenchRecord p = s;
            p.impl = "parallel";
            p.seconds = parallel_rep * double(cfg.reps);
            p.events_per_sec = events / p.seconds;
            p.speedup = serial_rep / parallel_rep;
            records.push_back(s);
            records.push_back(p);
          } catch (const std::bad_alloc&) {
            records.push_back(
                detail::skip_record(T, n, b, w, "both", "allocation failed"));
          }
        }
  return records;
}

namespace detail {

/// Two stacked layers of `arch` at the table preset; forward + backward once.
template <class S>
struct ModelUnderBench {
  std::string arch;
  index_t k = 0;  // qrnn window
  std::vector<GilrParams<S>> gilr;
  std::vector<GilrLstmParams<S>> gl;
  std::vector<QrnnParams<S>> qrnn;

  ModelUnderBench(const std::string& a, index_t input, index_t hidden,
                  Rng& rng)
      : arch(a) {
    if (a == "gilr") {
      gilr.push_back(gilr_init<S>(rng, input, hidden, 1.0));
      gilr.push_back(gilr_init<S>(rng, hidden, hidden, 1.0));
    } else if (a == "gilr-lstm") {
      gl.push_back(gilr_lstm_init<S>(rng, input, hidden, 1.0));
      gl.push_back(gilr_lstm_init<S>(rng, hidden, hidden, 1.0));
    } else if (a == "qrnn-k2" || a == "qrnn-k10") {
      k = a == "qrnn-k2" ? 2 : 10;
      qrnn.push_back(qrnn_init<S>(rng, input, hidden, k, 1.0));
      qrnn.push_back(qrnn_init<S>(rng, hidden, hidden, k, 1.0));
    } else {
      contract_fail("bench_model: unknown arch \"" + a + "\"");
    }
  }

  /// Runs train-shaped work (forward + backward, both layers) and returns
  /// the final hidden tensor for the correctness guard.
  Tensor3<S> step(const Tensor3<S>& x, const Tensor2<S>& zero, ScanMode mode,
                  ThreadPool& pool) {
    const index_t T = x.steps, b = x.batch;
    const index_t n = zero.cols;
    Tensor3<S> d_h(T, b, n);
    std::fill(d_h.data.begin(), d_h.data.end(), S(1));

    if (arch == "gilr") {
      GilrCache<S> c1, c2;
      gilr_forward(gilr[0], x, zero, mode, pool, &c1);
      gilr_forward(gilr[1], c1.h, zero, mode, pool, &c2);
      GilrGrads<S> g1(gilr[0]), g2(gilr[1]);
      auto d1 = gilr_backward(gilr[1], c1.h, zero, c2, d_h, mode, pool, g2);
      gilr_backward(gilr[0], x, zero, c1, d1, mode, pool, g1);
      return c2.h;
    }
    if (arch == "gilr-lstm") {
      GilrLstmCache<S> c1, c2;
      auto h1 = gilr_lstm_forward(gl[0], x, zero, zero, mode, pool, &c1);
      auto h2 = gilr_lstm_forward(gl[1], h1, zero, zero, mode, pool, &c2);
      GilrLstmGrads<S> g1(gl[0]), g2(gl[1]);
      auto d1 =
          gilr_lstm_backward(gl[1], h1, zero, zero, c2, d_h, mode, pool, g2);
      gilr_lstm_backward(gl[0], x, zero, zero, c1, d1, mode, pool, g1);
      return h2;
    }
    QrnnCache<S> c1, c2;
    auto h1 = qrnn_forward(qrnn[0], x, zero, mode, pool, &c1);
    auto h2 = qrnn_forward(qrnn[1], h1, zero, mode, pool, &c2);
    QrnnGrads<S> g1(qrnn[0]), g2(qrnn[1]);
    auto d1 = qrnn_backward(qrnn[1], h1, zero, c2, d_h, mode, pool, g2);
    qrnn_backward(qrnn[0], x, zero, c1, d1, mode, pool, g1);
    return h2;
  }
};

}  // namespace detail

/// Whole-model throughput (forward + backward) for one arch over the
/// sequence-length grid, holding b*T at the preset constant.
template <class S>
std::vector<BenchRecord> bench_model(const std::string& arch,
                                     const BenchConfig& cfg) {
  cfg.validate();
  require(arch == "gilr" || arch == "gilr-lstm" || arch == "qrnn-k2" ||
              arch == "qrnn-k10",
          "bench_model: arch must be one of gilr, gilr-lstm, qrnn-k2, "
          "qrnn-k10");
  std::vector<BenchRecord> records;
  Rng root(cfg.seed);
  index_t point = 0;

  for (index_t T : cfg.seq_lens)
    for (int w : cfg.worker_counts) {
      const index_t idx = point++;
      const index_t n = cfg.model_hidden, m = cfg.model_input;
      if (cfg.model_bt % T != 0) {
        records.push_back(detail::skip_record(
            T, n, 0, w, "both", "preset bT is not divisible by T"));
        continue;
      }
      const index_t b = cfg.model_bt / T;
      const index_t kwin = arch == "qrnn-k10" ? 10 : 2;
      if ((arch == "qrnn-k2" || arch == "qrnn-k10") && kwin > T) {
        records.push_back(detail::skip_record(
            T, n, b, w, "both", "filter window exceeds sequence length"));
        continue;
      }
      // ~40 [T,b,n]-sized tensors live across caches + temporaries
      const size_t estimate =
          sizeof(S) * size_t(cfg.model_bt) * size_t(n) * 40;
      if (estimate > cfg.mem_budget_bytes) {
        records.push_back(detail::skip_record(
            T, n, b, w, "both",
            "estimated footprint " + std::to_string(estimate >> 20) +
                " MiB exceeds budget"));
        continue;
      }
      try {
        Rng rng = root.split(2000 + idx);
        detail::ModelUnderBench<S> model(arch, m, n, rng);
        Tensor3<S> x(T, b, m);
        fill_uniform(rng, x, -1.0, 1.0);
        Tensor2<S> zero(b, n);
        const uint64_t sum =
            detail::fnv1a64(x.data.data(), x.data.size() * sizeof(S),
                            0xcbf29ce484222325ull);

        ThreadPool single(1);
        ThreadPool pool(w);
        Tensor3<S> h_serial(1, 1, 1), h_parallel(1, 1, 1);
        // The speedup at short T sits within a few percent of 1, so the
        // two modes are timed in alternation rather than in blocks.
        const auto [serial_rep, parallel_rep] = detail::median_paired_seconds(
            cfg.warmup, cfg.reps,
            [&] { h_serial = model.step(x, zero, ScanMode::Serial, single); },
            [&] {
              h_parallel = model.step(x, zero, ScanMode::Parallel, pool);
            });

        const double tol = sizeof(S) == 4 ? 2e-4 : 1e-9;
        double worst = 0, scale = 0;
        for (size_t i = 0; i < h_serial.data.size(); ++i) {
          worst = std::max(worst, std::fabs(double(h_serial.data[i]) -
                                            double(h_parallel.data[i])));
          scale = std::max(scale, std::fabs(double(h_serial.data[i])));
        }
        if (worst > tol * std::max(scale, 1.0))
          contract_fail("bench_model: serial/parallel disagreement at T=" +
                        std::to_string(T));

        const double events = double(b) * double(T) * double(cfg.reps);
        BenchRecord s;
        s.T = T;
        s.n = n;
        s.b = b;
        s.workers = w;
        s.impl = "serial";
        s.reps = cfg.reps;
        s.seconds = serial_rep * double(cfg.reps);
        s.events_per_sec = events / s.seconds;
        s.speedup = 1.0;
        s.input_checksum = sum;

        BenchRecord p = s;
        p.impl = "parallel";
        p.seconds = parallel_rep * double(cfg.reps);
        p.events_per_sec = events / p.seconds;
        p.speedup = serial_rep / parallel_rep;
        records.push_back(s);
        records.push_back(p);
      } catch (const std::bad_alloc&) {
        records.push_back(
            detail::skip_record(T, n, 0, w, "both", "allocation failed"));
      }
    }
  return records;
}

/// CSV with `#` metadata comments, the fixed header, then one row per
/// non-skipped record in grid order. Skipped points become comment lines.
inline void write_bench_csv(std::ostream& out,
                            const std::vector<BenchRecord>& records,
                            const std::vector<std::string>& metadata = {}) {
  for (const auto& line : metadata) out << "# " << line << "\n";
  out << "T,n,b,workers,impl,events_per_sec,speedup\n";
  out.precision(9);
  for (const auto& r : records) {
    if (r.skipped) {
      out << "# skipped T=" << r.T << " n=" << r.n << " b=" << r.b
          << " workers=" << r.workers << ": " << r.warning << "\n";
      continue;
    }
    out << r.T << "," << r.n << "," << r.b << "," << r.workers << ","
        << r.impl << "," << r.events_per_sec << "," << r.speedup << "\n";
  }
}

}  // namespace linrec
