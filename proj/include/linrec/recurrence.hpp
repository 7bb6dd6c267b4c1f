#pragma once

// Serial and chunk-parallel evaluation of the elementwise linear recurrence
//
//     h_t = lambda_t (*) h_{t-1} + x_t
//
// over the time axis, plus its exact reverse-mode gradients. The parallel
// path partitions [1..T] into p contiguous chunks and runs three phases:
//   1. per chunk, in parallel: decay product P_i and zero-state result R_i
//   2. one short sequential pass stitching chunk boundary states C_i
//   3. per chunk, in parallel: the local scan seeded with C_{i-1}
// Decays are diagonal (a vector per step); the full-matrix form is out of
// scope. Stability is the caller's contract: gated layers feed decays in
// (0,1); the engine does not clamp.

#include <utility>
#include <vector>

#include "linrec/common.hpp"
#include "linrec/tensor.hpp"
#include "linrec/thread_pool.hpp"

namespace linrec {

enum class ScanMode { Serial, Parallel };

inline const char* scan_mode_name(ScanMode m) {
  return m == ScanMode::Serial ? "serial" : "parallel";
}

/// The (lambda, x, h0) triple defining one batched linear recurrence.
template <class S>
struct RecurrenceInput {
  Tensor3<S> decays;    // lambda_t, [T, b, n]
  Tensor3<S> impulses;  // x_t,      [T, b, n]
  Tensor2<S> initial;   // h0,       [b, n]
};

template <class S>
void validate_recurrence_shapes(const Tensor3<S>& decays,
                                const Tensor3<S>& impulses,
                                const Tensor2<S>& initial) {
  check_same_shape(decays, impulses, "recurrence");
  if (initial.rows != decays.batch || initial.cols != decays.features) {
    std::ostringstream os;
    os << "recurrence: initial state [" << initial.rows << "," << initial.cols
       << "] does not match [" << decays.batch << "," << decays.features
       << "]";
    contract_fail(os.str());
  }
}

/// Contiguous partition of steps 1..T (inclusive, 1-indexed) across workers.
struct ChunkPlan {
  std::vector<std::pair<index_t, index_t>> bounds;
  int workers = 0;

  index_t chunks() const { return index_t(bounds.size()); }
};

/// Effective p = min(requested, T); base size floor(T/p) with the first
/// T mod p chunks one step longer.
inline ChunkPlan plan_chunks(index_t T, int requested_workers) {
  if (T < 1) contract_fail("plan_chunks: T must be >= 1");
  if (requested_workers < 1)
    contract_fail("plan_chunks: requested_workers must be >= 1");
  const index_t p = std::min<index_t>(requested_workers, T);
  ChunkPlan plan;
  plan.workers = int(p);
  plan.bounds.reserve(size_t(p));
  const index_t base = T / p;
  const index_t rem = T % p;
  index_t start = 1;
  for (index_t i = 0; i < p; ++i) {
    const index_t len = base + (i < rem ? 1 : 0);
    plan.bounds.emplace_back(start, start + len - 1);
    start += len;
  }
  return plan;
}

inline void validate_plan(const ChunkPlan& plan, index_t T) {
  if (plan.bounds.empty()) contract_fail("ChunkPlan: no chunks");
  if (plan.bounds.front().first != 1)
    contract_fail("ChunkPlan: first chunk must start at step 1");
  if (plan.bounds.back().second != T)
    contract_fail("ChunkPlan: last chunk must end at step T");
  for (size_t i = 0; i < plan.bounds.size(); ++i) {
    auto [s, e] = plan.bounds[i];
    if (s > e) contract_fail("ChunkPlan: chunk start exceeds end");
    if (i + 1 < plan.bounds.size() && e + 1 != plan.bounds[i + 1].first)
      contract_fail("ChunkPlan: chunks must be contiguous");
  }
}

namespace detail {

// Seeded scan over rows [t0, t1] (0-based, inclusive) of the [T, width]
// views: out[t] = lam[t] * prev + x[t]. Shared by the serial path and
// phase 3, so a one-chunk plan reproduces the serial result bit for bit.
template <class S>
void scan_span(const S* lam, const S* x, const S* seed, S* out, index_t t0,
               index_t t1, index_t width) {
  const S* prev = seed;
  for (index_t t = t0; t <= t1; ++t) {
    const S* l = lam + t * width;
    const S* v = x + t * width;
    S* o = out + t * width;
    for (index_t j = 0; j < width; ++j) o[j] = l[j] * prev[j] + v[j];
    prev = o;
  }
}

// Fused chunk summary: P = elementwise product of decays over the chunk,
// R = the chunk recurrence run from the zero state.
template <class S>
void chunk_summary(const S* lam, const S* x, index_t t0, index_t t1,
                   index_t width, S* P, S* R) {
  for (index_t j = 0; j < width; ++j) {
    P[j] = S(1);
    R[j] = S(0);
  }
  for (index_t t = t0; t <= t1; ++t) {
    const S* l = lam + t * width;
    const S* v = x + t * width;
    for (index_t j = 0; j < width; ++j) {
      R[j] = l[j] * R[j] + v[j];
      P[j] *= l[j];
    }
  }
}

template <class S>
void screen_finite(const Tensor3<S>& t, const char* name) {
  size_t bad;
  if (!all_finite(t.data, &bad)) {
    const index_t step = index_t(bad) / t.step_size();
    const index_t rest = index_t(bad) % t.step_size();
    std::ostringstream os;
    os << "non-finite value in " << name << " at [t=" << step + 1
       << ", b=" << rest / t.features << ", n=" << rest % t.features << "]";
    contract_fail(os.str());
  }
}

template <class S>
void screen_finite(const Tensor2<S>& t, const char* name) {
  size_t bad;
  if (!all_finite(t.data, &bad)) {
    std::ostringstream os;
    os << "non-finite value in " << name << " at [b=" << index_t(bad) / t.cols
       << ", n=" << index_t(bad) % t.cols << "]";
    contract_fail(os.str());
  }
}

template <class S>
void screen_recurrence(const Tensor3<S>& decays, const Tensor3<S>& impulses,
                       const Tensor2<S>& initial) {
  screen_finite(decays, "decays");
  screen_finite(impulses, "impulses");
  screen_finite(initial, "initial");
}

}  // namespace detail

/// Left-to-right reference evaluation; the oracle the parallel path is
/// checked against.
template <class S>
Tensor3<S> scan_serial(const Tensor3<S>& decays, const Tensor3<S>& impulses,
                       const Tensor2<S>& initial, bool check_finite = false) {
  validate_recurrence_shapes(decays, impulses, initial);
  if (check_finite) detail::screen_recurrence(decays, impulses, initial);
  Tensor3<S> h(decays.steps, decays.batch, decays.features);
  detail::scan_span(decays.data.data(), impulses.data.data(),
                    initial.data.data(), h.data.data(), 0, decays.steps - 1,
                    decays.step_size());
  return h;
}

template <class S>
Tensor3<S> scan_serial(const RecurrenceInput<S>& in, bool check_finite = false) {
  return scan_serial(in.decays, in.impulses, in.initial, check_finite);
}

/// Phase-1/2 intermediates, exposed for inspection: P[i], R[i] are the
/// chunk summaries, C[i] the stitched chunk-end states.
template <class S>
struct ScanSummaries {
  Tensor3<S> P, R, C;  // [p, b, n]
};

template <class S>
Tensor3<S> scan_parallel(const Tensor3<S>& decays, const Tensor3<S>& impulses,
                         const Tensor2<S>& initial, const ChunkPlan& plan,
                         ThreadPool& pool, bool check_finite = false,
                         ScanSummaries<S>* summaries = nullptr) {
  validate_recurrence_shapes(decays, impulses, initial);
  validate_plan(plan, decays.steps);
  if (check_finite) detail::screen_recurrence(decays, impulses, initial);

  const index_t p = plan.chunks();
  const index_t width = decays.step_size();
  const S* lam = decays.data.data();
  const S* x = impulses.data.data();

  Tensor3<S> h(decays.steps, decays.batch, decays.features);
  Tensor3<S> P(p, decays.batch, decays.features);
  Tensor3<S> R(p, decays.batch, decays.features);
  Tensor3<S> C(p, decays.batch, decays.features);

  // Phase 1: per-chunk summaries, chunks in parallel.
  pool.parallel_for(p, [&](index_t i) {
    auto [s, e] = plan.bounds[size_t(i)];
    detail::chunk_summary(lam, x, s - 1, e - 1, width, P.step(i).data(),
                          R.step(i).data());
  });

  // Phase 2: C_i = P_i * C_{i-1} + R_i with C_{-1} = h0, sequential over
  // the p summaries only.
  {
    const S* prev = initial.data.data();
    for (index_t i = 0; i < p; ++i) {
      const S* Pi = P.step(i).data();
      const S* Ri = R.step(i).data();
      S* Ci = C.step(i).data();
      for (index_t j = 0; j < width; ++j) Ci[j] = Pi[j] * prev[j] + Ri[j];
      prev = Ci;
    }
  }

  // Phase 3: chunk-local scans seeded with the stitched boundary states.
  pool.parallel_for(p, [&](index_t i) {
    auto [s, e] = plan.bounds[size_t(i)];
    const S* seed = (i == 0) ? initial.data.data() : C.step(i - 1).data();
    detail::scan_span(lam, x, seed, h.data.data(), s - 1, e - 1, width);
  });

  if (summaries) {
    summaries->P = std::move(P);
    summaries->R = std::move(R);
    summaries->C = std::move(C);
  }
  return h;
}

template <class S>
Tensor3<S> scan_parallel(const RecurrenceInput<S>& in, const ChunkPlan& plan,
                         ThreadPool& pool, bool check_finite = false,
                         ScanSummaries<S>* summaries = nullptr) {
  return scan_parallel(in.decays, in.impulses, in.initial, plan, pool,
                       check_finite, summaries);
}

template <class S>
Tensor3<S> scan(const Tensor3<S>& decays, const Tensor3<S>& impulses,
                const Tensor2<S>& initial, ScanMode mode, ThreadPool& pool,
                bool check_finite = false) {
  if (mode == ScanMode::Serial)
    return scan_serial(decays, impulses, initial, check_finite);
  const ChunkPlan plan = plan_chunks(decays.steps, pool.size());
  return scan_parallel(decays, impulses, initial, plan, pool, check_finite);
}

/// Gradients mirroring RecurrenceInput.
template <class S>
struct RecurrenceGradients {
  Tensor3<S> d_decays;
  Tensor3<S> d_impulses;
  Tensor2<S> d_initial;
};

namespace detail {

/// Reverse-mode core. The loss gradient obeys a linear recurrence run
/// backwards,
///     G_t = lambda_{t+1} (*) G_{t+1} + dL/dh_t,
/// so it reuses the forward machinery on time-reversed decays shifted by
/// one step. Then
///     d_lambda_t = h_{t-1} (*) G_t   (h0 for t = 1)
///     d_x_t      = G_t
///     d_h0       = lambda_1 (*) G_1.
template <class S>
RecurrenceGradients<S> scan_backward_impl(const Tensor3<S>& decays,
                                          const Tensor2<S>& initial,
                                          const Tensor3<S>& h,
                                          const Tensor3<S>& d_h,
                                          ScanMode mode,
                                          const ChunkPlan* plan,
                                          ThreadPool& pool,
                                          bool check_finite) {
  check_same_shape(decays, h, "scan_backward(h)");
  check_same_shape(decays, d_h, "scan_backward(d_h)");
  validate_recurrence_shapes(decays, d_h, initial);
  if (check_finite) {
    screen_finite(decays, "decays");
    screen_finite(d_h, "d_h");
  }

  const index_t T = decays.steps;
  const index_t b = decays.batch;
  const index_t n = decays.features;
  const index_t width = b * n;

  // Reversed image: s = T-1-t (0-based). rev_dec[0] = 0 so the zero seed
  // is inert; rev_dec[s] = decays[T-s] for s >= 1.
  Tensor3<S> rev_dec(T, b, n);
  Tensor3<S> rev_imp(T, b, n);
  for (index_t s = 0; s < T; ++s) {
    S* rd = rev_dec.step(s).data();
    S* ri = rev_imp.step(s).data();
    if (s > 0) {
      const S* src = decays.step(T - s).data();
      for (index_t j = 0; j < width; ++j) rd[j] = src[j];
    }
    const S* dh = d_h.step(T - 1 - s).data();
    for (index_t j = 0; j < width; ++j) ri[j] = dh[j];
  }
  Tensor2<S> zero_seed(b, n);
  Tensor3<S> g_rev =
      (mode == ScanMode::Serial)
          ? scan_serial(rev_dec, rev_imp, zero_seed)
          : scan_parallel(rev_dec, rev_imp, zero_seed,
                          plan ? *plan : plan_chunks(T, pool.size()), pool);

  RecurrenceGradients<S> grads;
  grads.d_decays = Tensor3<S>(T, b, n);
  grads.d_impulses = Tensor3<S>(T, b, n);
  grads.d_initial = Tensor2<S>(b, n);

  for (index_t t = 0; t < T; ++t) {
    const S* G = g_rev.step(T - 1 - t).data();
    const S* hprev = (t == 0) ? initial.data.data() : h.step(t - 1).data();
    S* dd = grads.d_decays.step(t).data();
    S* di = grads.d_impulses.step(t).data();
    for (index_t j = 0; j < width; ++j) {
      di[j] = G[j];
      dd[j] = hprev[j] * G[j];
    }
  }
  {
    const S* G1 = g_rev.step(T - 1).data();
    const S* lam1 = decays.step(0).data();
    S* d0 = grads.d_initial.data.data();
    for (index_t j = 0; j < width; ++j) d0[j] = lam1[j] * G1[j];
  }
  return grads;
}

}  // namespace detail

/// Gradients of a loss w.r.t. every recurrence input, given the forward
/// output h and the upstream dL/dh.
template <class S>
RecurrenceGradients<S> scan_backward(const Tensor3<S>& decays,
                                     const Tensor2<S>& initial,
                                     const Tensor3<S>& h,
                                     const Tensor3<S>& d_h, ScanMode mode,
                                     ThreadPool& pool,
                                     bool check_finite = false) {
  return detail::scan_backward_impl(decays, initial, h, d_h, mode, nullptr,
                                    pool, check_finite);
}

/// Same, with the reversed scan chunked by an explicit plan (the forward
/// plan is reusable: T is unchanged).
template <class S>
RecurrenceGradients<S> scan_backward(const RecurrenceInput<S>& in,
                                     const Tensor3<S>& h,
                                     const Tensor3<S>& d_h,
                                     const ChunkPlan& plan, ThreadPool& pool,
                                     bool check_finite = false) {
  validate_plan(plan, in.decays.steps);
  return detail::scan_backward_impl(in.decays, in.initial, h, d_h,
                                    ScanMode::Parallel, &plan, pool,
                                    check_finite);
}

}  // namespace linrec
