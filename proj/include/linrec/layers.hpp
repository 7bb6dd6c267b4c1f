#pragma once

// Recurrent layers built on the linear scan: a gated linear recurrence
// (GILR), an LSTM-like cell whose gates read a GILR surrogate of the
// previous hidden state, a convolutional gated layer (QRNN style), and a
// conventional serial LSTM kept as the baseline.
//
// Every pointwise/dense transform is evaluated for all T steps at once by
// flattening [T, b, .] to a [T*b, .] matrix, so the only sequential work
// left is the recurrence itself (parallel scan for the first three layers,
// the honest step loop for the baseline LSTM).
//
// Gate blocks are fused along the feature axis; the order is f, i, o, z
// for 4-gate layers and f, o, z for the 3-gate QRNN.

#include <vector>

#include "linrec/recurrence.hpp"
#include "linrec/rng.hpp"

namespace linrec {

// ---- GILR ---------------------------------------------------------------
//
//   g_t = sigmoid(U x_t + b_g)
//   i_t = tau(V x_t + b_z)
//   h_t = g_t (*) h_{t-1} + (1 - g_t) (*) i_t

template <class S>
struct GilrParams {
  Tensor2<S> U, V;        // [n x m] each
  Tensor2<S> b_g, b_z;    // [1 x n]
  Activation act = Activation::Tanh;

  index_t input() const { return U.cols; }
  index_t hidden() const { return U.rows; }

  std::vector<Tensor2<S>*> tensors() { return {&U, &V, &b_g, &b_z}; }
  std::vector<const Tensor2<S>*> tensors() const {
    return {&U, &V, &b_g, &b_z};
  }
};

inline index_t gilr_parameter_count(index_t m, index_t n) {
  return 2 * (n * m + n);
}

template <class S>
GilrParams<S> gilr_init(Rng& rng, index_t m, index_t n, double gate_bias) {
  const double scale = 1.0 / std::sqrt(double(m));
  GilrParams<S> p;
  p.U = init_uniform<S>(rng, n, m, scale);
  p.V = init_uniform<S>(rng, n, m, scale);
  p.b_g = Tensor2<S>(1, n);
  p.b_z = Tensor2<S>(1, n);
  for (auto& v : p.b_g.data) v = S(gate_bias);
  return p;
}

template <class S>
struct GilrCache {
  Tensor3<S> g, i, h;  // activated gate, candidate, output
};

template <class S>
struct GilrGrads {
  Tensor2<S> U, V, b_g, b_z;

  explicit GilrGrads(const GilrParams<S>& p)
      : U(p.U.rows, p.U.cols),
        V(p.V.rows, p.V.cols),
        b_g(1, p.b_g.cols),
        b_z(1, p.b_z.cols) {}

  std::vector<Tensor2<S>*> tensors() { return {&U, &V, &b_g, &b_z}; }
};

template <class S>
Tensor3<S> gilr_forward(const GilrParams<S>& p, const Tensor3<S>& x,
                        const Tensor2<S>& h0, ScanMode mode, ThreadPool& pool,
                        GilrCache<S>* cache = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden();
  if (x.features != p.input())
    contract_fail("gilr_forward: input feature mismatch");

  Tensor3<S> g(T, b, n), i(T, b, n);
  affine(x, p.U, p.b_g, g);
  affine(x, p.V, p.b_z, i);
  sigmoid_inplace(g);
  activation_inplace(i, p.act);

  Tensor3<S> impulses = mul(one_minus(g), i);
  Tensor3<S> h = scan(g, impulses, h0, mode, pool);
  if (cache) {
    cache->g = std::move(g);
    cache->i = std::move(i);
    cache->h = h;
  }
  return h;
}

/// Accumulates parameter gradients into `grads`, returns d_x; d_h0 is
/// written when non-null.
template <class S>
Tensor3<S> gilr_backward(const GilrParams<S>& p, const Tensor3<S>& x,
                         const Tensor2<S>& h0, const GilrCache<S>& cache,
                         const Tensor3<S>& d_h, ScanMode mode,
                         ThreadPool& pool, GilrGrads<S>& grads,
                         Tensor2<S>* d_h0 = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden();
  auto rec = scan_backward(cache.g, h0, cache.h, d_h, mode, pool);

  // decays g also shape the impulses (1-g)*i, hence the extra term
  Tensor3<S> dg(T, b, n), di(T, b, n);
  for (size_t k = 0; k < dg.data.size(); ++k) {
    const S g = cache.g.data[k];
    const S G = rec.d_impulses.data[k];
    dg.data[k] = (rec.d_decays.data[k] - G * cache.i.data[k]) * g * (S(1) - g);
    di.data[k] = G * (S(1) - g) *
                 activation_deriv_from_value(p.act, cache.i.data[k]);
  }

  accumulate_weight_grad(dg, x, grads.U);
  accumulate_bias_grad(dg, grads.b_g);
  accumulate_weight_grad(di, x, grads.V);
  accumulate_bias_grad(di, grads.b_z);

  Tensor3<S> dx(T, b, p.input());
  accumulate_input_grad(dg, p.U, dx, /*accumulate=*/false);
  accumulate_input_grad(di, p.V, dx, /*accumulate=*/true);
  if (d_h0) *d_h0 = std::move(rec.d_initial);
  return dx;
}

// ---- GILR-LSTM ----------------------------------------------------------
//
// An LSTM whose gate inputs use a GILR surrogate of the previous hidden
// state, making every transform either pointwise or a scan:
//
//   htil = GILR(x)                       (surrogate, own parameters)
//   [f i o z]_t = act(U htil_{t-1} + V x_t + b)
//   c_t = f_t (*) c_{t-1} + i_t (*) z_t
//   h_t = o_t (*) c_t

template <class S>
struct GilrLstmParams {
  GilrParams<S> surrogate;  // m -> n
  Tensor2<S> U;             // [4n x n], applied to htil_{t-1}
  Tensor2<S> V;             // [4n x m], applied to x_t
  Tensor2<S> bias;          // [1 x 4n]

  index_t input() const { return V.cols; }
  index_t hidden() const { return U.cols; }

  std::vector<Tensor2<S>*> tensors() {
    auto v = surrogate.tensors();
    v.push_back(&U);
    v.push_back(&V);
    v.push_back(&bias);
    return v;
  }
};

inline index_t lstm_parameter_count(index_t m, index_t n) {
  return 4 * (n * n + n * m + n);
}

/// Gate parameters match the LSTM exactly; the surrogate adds 2(nm + n)
/// on top (i.e. 2n(m+1) extra parameters relative to the LSTM).
inline index_t gilr_lstm_parameter_count(index_t m, index_t n) {
  return lstm_parameter_count(m, n) + gilr_parameter_count(m, n);
}

template <class S>
GilrLstmParams<S> gilr_lstm_init(Rng& rng, index_t m, index_t n,
                                 double gate_bias) {
  GilrLstmParams<S> p;
  Rng sub = rng.split(1);
  p.surrogate = gilr_init<S>(sub, m, n, gate_bias);
  p.U = init_uniform<S>(rng, 4 * n, n, 1.0 / std::sqrt(double(n)));
  p.V = init_uniform<S>(rng, 4 * n, m, 1.0 / std::sqrt(double(m)));
  p.bias = Tensor2<S>(1, 4 * n);
  for (index_t j = 0; j < n; ++j) p.bias.at(0, j) = S(gate_bias);  // f block
  return p;
}

template <class S>
struct GilrLstmCache {
  GilrCache<S> surrogate;
  Tensor3<S> htil_prev;  // htil shifted one step right, seeded with htil0
  Tensor3<S> gates;      // [T, b, 4n] activated, blocks f,i,o,z
  Tensor3<S> c;
};

template <class S>
struct GilrLstmGrads {
  GilrGrads<S> surrogate;
  Tensor2<S> U, V, bias;

  explicit GilrLstmGrads(const GilrLstmParams<S>& p)
      : surrogate(p.surrogate),
        U(p.U.rows, p.U.cols),
        V(p.V.rows, p.V.cols),
        bias(1, p.bias.cols) {}

  std::vector<Tensor2<S>*> tensors() {
    auto v = surrogate.tensors();
    v.push_back(&U);
    v.push_back(&V);
    v.push_back(&bias);
    return v;
  }
};

namespace detail {

/// out[t] = src[t-1] with out[0] = seed; time-major copy.
template <class S>
Tensor3<S> shift_right(const Tensor3<S>& src, const Tensor2<S>& seed) {
  Tensor3<S> out(src.steps, src.batch, src.features);
  std::copy(seed.data.begin(), seed.data.end(), out.step(0).begin());
  for (index_t t = 1; t < src.steps; ++t)
    std::copy(src.step(t - 1).begin(), src.step(t - 1).end(),
              out.step(t).begin());
  return out;
}

/// Activate a fused gate tensor: sigmoid on the first `sig_blocks` blocks,
/// `act` on the last block.
template <class S>
void activate_gates(Tensor3<S>& gates, index_t n, index_t sig_blocks,
                    Activation act) {
  const index_t rows = gates.steps * gates.batch;
  const index_t width = gates.features;
  S* p = gates.data.data();
  for (index_t r = 0; r < rows; ++r, p += width) {
    for (index_t j = 0; j < sig_blocks * n; ++j) p[j] = sigmoid(p[j]);
    for (index_t j = sig_blocks * n; j < width; ++j)
      p[j] = apply_activation(act, p[j]);
  }
}

}  // namespace detail

/// Initial state: htil0 seeds the surrogate scan and the first gate input,
/// c0 seeds the cell scan.
template <class S>
Tensor3<S> gilr_lstm_forward(const GilrLstmParams<S>& p, const Tensor3<S>& x,
                             const Tensor2<S>& htil0, const Tensor2<S>& c0,
                             ScanMode mode, ThreadPool& pool,
                             GilrLstmCache<S>* cache = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden();
  if (x.features != p.input())
    contract_fail("gilr_lstm_forward: input feature mismatch");

  GilrCache<S> scache;
  Tensor3<S> htil = gilr_forward(p.surrogate, x, htil0, mode, pool, &scache);
  Tensor3<S> htil_prev = detail::shift_right(htil, htil0);

  Tensor3<S> gates(T, b, 4 * n);
  affine(x, p.V, p.bias, gates);
  affine(htil_prev, p.U, p.bias, gates, /*accumulate=*/true);
  detail::activate_gates(gates, n, 3, Activation::Tanh);

  // c = scan(f, i (*) z, c0); h = o (*) c
  Tensor3<S> f(T, b, n), iz(T, b, n);
  Tensor3<S> h(T, b, n);
  const index_t rows = T * b;
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = gates.data.data() + r * 4 * n;
    S* fr = f.data.data() + r * n;
    S* izr = iz.data.data() + r * n;
    for (index_t j = 0; j < n; ++j) {
      fr[j] = gr[j];
      izr[j] = gr[n + j] * gr[3 * n + j];
    }
  }
  Tensor3<S> c = scan(f, iz, c0, mode, pool);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = gates.data.data() + r * 4 * n;
    const S* cr = c.data.data() + r * n;
    S* hr = h.data.data() + r * n;
    for (index_t j = 0; j < n; ++j) hr[j] = gr[2 * n + j] * cr[j];
  }

  if (cache) {
    cache->surrogate = std::move(scache);
    cache->htil_prev = std::move(htil_prev);
    cache->gates = std::move(gates);
    cache->c = std::move(c);
  }
  return h;
}

template <class S>
Tensor3<S> gilr_lstm_backward(const GilrLstmParams<S>& p, const Tensor3<S>& x,
                              const Tensor2<S>& htil0, const Tensor2<S>& c0,
                              const GilrLstmCache<S>& cache,
                              const Tensor3<S>& d_h, ScanMode mode,
                              ThreadPool& pool, GilrLstmGrads<S>& grads,
                              Tensor2<S>* d_htil0 = nullptr,
                              Tensor2<S>* d_c0 = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden();
  const index_t rows = T * b;

  // h = o (*) c
  Tensor3<S> dc(T, b, n), d_o(T, b, n);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = cache.gates.data.data() + r * 4 * n;
    const S* cr = cache.c.data.data() + r * n;
    const S* dhr = d_h.data.data() + r * n;
    for (index_t j = 0; j < n; ++j) {
      d_o.data[size_t(r * n + j)] = dhr[j] * cr[j];
      dc.data[size_t(r * n + j)] = dhr[j] * gr[2 * n + j];
    }
  }

  // cell scan: decays f, impulses i (*) z
  Tensor3<S> f(T, b, n);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = cache.gates.data.data() + r * 4 * n;
    for (index_t j = 0; j < n; ++j) f.data[size_t(r * n + j)] = gr[j];
  }
  auto rec = scan_backward(f, c0, cache.c, dc, mode, pool);

  // fused pre-activation gradients, blocks f,i,o,z
  Tensor3<S> dpre(T, b, 4 * n);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = cache.gates.data.data() + r * 4 * n;
    const S* df = rec.d_decays.data.data() + r * n;
    const S* diz = rec.d_impulses.data.data() + r * n;
    const S* dor = d_o.data.data() + r * n;
    S* out = dpre.data.data() + r * 4 * n;
    for (index_t j = 0; j < n; ++j) {
      const S fv = gr[j], iv = gr[n + j], ov = gr[2 * n + j],
              zv = gr[3 * n + j];
      out[j] = df[j] * fv * (S(1) - fv);
      out[n + j] = diz[j] * zv * iv * (S(1) - iv);
      out[2 * n + j] = dor[j] * ov * (S(1) - ov);
      out[3 * n + j] = diz[j] * iv * (S(1) - zv * zv);
    }
  }

  accumulate_weight_grad(dpre, cache.htil_prev, grads.U);
  accumulate_weight_grad(dpre, x, grads.V);
  accumulate_bias_grad(dpre, grads.bias);

  Tensor3<S> dx(T, b, p.input());
  accumulate_input_grad(dpre, p.V, dx, /*accumulate=*/false);

  // gradient to the shifted surrogate, then unshift one step
  Tensor3<S> d_htil_prev(T, b, n);
  accumulate_input_grad(dpre, p.U, d_htil_prev, /*accumulate=*/false);
  Tensor3<S> d_htil(T, b, n);
  for (index_t t = 0; t + 1 < T; ++t)
    std::copy(d_htil_prev.step(t + 1).begin(), d_htil_prev.step(t + 1).end(),
              d_htil.step(t).begin());
  // last surrogate step feeds no gate; its direct gradient is zero

  Tensor2<S> d_htil0_scan(b, n);
  Tensor3<S> dx_sur =
      gilr_backward(p.surrogate, x, htil0, cache.surrogate, d_htil, mode,
                    pool, grads.surrogate, &d_htil0_scan);
  for (size_t k = 0; k < dx.data.size(); ++k) dx.data[k] += dx_sur.data[k];

  if (d_htil0) {
    // htil0 feeds both the surrogate scan and the t=1 gate input
    *d_htil0 = Tensor2<S>(b, n);
    const S* shifted = d_htil_prev.step(0).data();
    for (size_t k = 0; k < d_htil0->data.size(); ++k)
      d_htil0->data[k] = d_htil0_scan.data[k] + shifted[k];
  }
  if (d_c0) *d_c0 = std::move(rec.d_initial);
  return dx;
}

// ---- QRNN ---------------------------------------------------------------
//
// Gates come from width-k causal convolutions over the input (window
// t-k+1 .. t, zero-padded on the left; k = 1 degenerates to pointwise):
//
//   [f o z]_t = act(sum_s W_s x_{t-s} + b)
//   c_t = f_t (*) c_{t-1} + (1 - f_t) (*) z_t
//   h_t = o_t (*) c_t
//
// Tap s is applied as one matrix product over the whole sequence: rows
// s*b.. of the pre-activation accumulate x rows 0.. against W_s, so no
// shifted copies of the input are ever materialized.

template <class S>
struct QrnnParams {
  std::vector<Tensor2<S>> W;  // k taps, each [3n x m]; W[s] sees x_{t-s}
  Tensor2<S> bias;            // [1 x 3n]

  index_t input() const { return W.at(0).cols; }
  index_t hidden() const { return bias.cols / 3; }
  index_t window() const { return index_t(W.size()); }

  std::vector<Tensor2<S>*> tensors() {
    std::vector<Tensor2<S>*> v;
    for (auto& w : W) v.push_back(&w);
    v.push_back(&bias);
    return v;
  }
};

inline index_t qrnn_parameter_count(index_t m, index_t n, index_t k) {
  return 3 * (k * n * m + n);
}

template <class S>
QrnnParams<S> qrnn_init(Rng& rng, index_t m, index_t n, index_t k,
                        double gate_bias) {
  if (k < 1) contract_fail("qrnn_init: window must be >= 1");
  QrnnParams<S> p;
  const double scale = 1.0 / std::sqrt(double(m * k));
  for (index_t s = 0; s < k; ++s)
    p.W.push_back(init_uniform<S>(rng, 3 * n, m, scale));
  p.bias = Tensor2<S>(1, 3 * n);
  for (index_t j = 0; j < n; ++j) p.bias.at(0, j) = S(gate_bias);  // f block
  return p;
}

template <class S>
struct QrnnCache {
  Tensor3<S> gates;  // [T, b, 3n] activated, blocks f,o,z
  Tensor3<S> c;
};

template <class S>
struct QrnnGrads {
  std::vector<Tensor2<S>> W;
  Tensor2<S> bias;

  explicit QrnnGrads(const QrnnParams<S>& p) : bias(1, p.bias.cols) {
    for (const auto& w : p.W) W.emplace_back(w.rows, w.cols);
  }

  std::vector<Tensor2<S>*> tensors() {
    std::vector<Tensor2<S>*> v;
    for (auto& w : W) v.push_back(&w);
    v.push_back(&bias);
    return v;
  }
};

template <class S>
Tensor3<S> qrnn_forward(const QrnnParams<S>& p, const Tensor3<S>& x,
                        const Tensor2<S>& c0, ScanMode mode, ThreadPool& pool,
                        QrnnCache<S>* cache = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden(), m = p.input();
  const index_t k = p.window();
  if (x.features != m) contract_fail("qrnn_forward: input feature mismatch");
  if (k > T)
    contract_fail("qrnn_forward: filter window exceeds sequence length");

  Tensor3<S> gates(T, b, 3 * n);
  {
    S* g = gates.data.data();
    const S* bias = p.bias.data.data();
    for (index_t r = 0; r < T * b; ++r)
      for (index_t j = 0; j < 3 * n; ++j) g[r * 3 * n + j] = bias[j];
  }
  for (index_t s = 0; s < k && s < T; ++s)
    gemm_nt(x.data.data(), (T - s) * b, m, p.W[size_t(s)].data.data(), 3 * n,
            gates.data.data() + s * b * 3 * n, /*accumulate=*/true);
  detail::activate_gates(gates, n, 2, Activation::Tanh);

  Tensor3<S> f(T, b, n), imp(T, b, n);
  const index_t rows = T * b;
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = gates.data.data() + r * 3 * n;
    for (index_t j = 0; j < n; ++j) {
      f.data[size_t(r * n + j)] = gr[j];
      imp.data[size_t(r * n + j)] = (S(1) - gr[j]) * gr[2 * n + j];
    }
  }
  Tensor3<S> c = scan(f, imp, c0, mode, pool);

  Tensor3<S> h(T, b, n);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = gates.data.data() + r * 3 * n;
    const S* cr = c.data.data() + r * n;
    for (index_t j = 0; j < n; ++j)
      h.data[size_t(r * n + j)] = gr[n + j] * cr[j];
  }

  if (cache) {
    cache->gates = std::move(gates);
    cache->c = std::move(c);
  }
  return h;
}

template <class S>
Tensor3<S> qrnn_backward(const QrnnParams<S>& p, const Tensor3<S>& x,
                         const Tensor2<S>& c0, const QrnnCache<S>& cache,
                         const Tensor3<S>& d_h, ScanMode mode,
                         ThreadPool& pool, QrnnGrads<S>& grads,
                         Tensor2<S>* d_c0 = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden(), m = p.input();
  const index_t k = p.window();
  const index_t rows = T * b;

  Tensor3<S> dc(T, b, n), d_o(T, b, n);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = cache.gates.data.data() + r * 3 * n;
    const S* cr = cache.c.data.data() + r * n;
    const S* dhr = d_h.data.data() + r * n;
    for (index_t j = 0; j < n; ++j) {
      d_o.data[size_t(r * n + j)] = dhr[j] * cr[j];
      dc.data[size_t(r * n + j)] = dhr[j] * gr[n + j];
    }
  }

  Tensor3<S> f(T, b, n);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = cache.gates.data.data() + r * 3 * n;
    for (index_t j = 0; j < n; ++j) f.data[size_t(r * n + j)] = gr[j];
  }
  auto rec = scan_backward(f, c0, cache.c, dc, mode, pool);

  // f shapes the impulses (1-f)*z as well as the decays
  Tensor3<S> dpre(T, b, 3 * n);
  for (index_t r = 0; r < rows; ++r) {
    const S* gr = cache.gates.data.data() + r * 3 * n;
    const S* df = rec.d_decays.data.data() + r * n;
    const S* dimp = rec.d_impulses.data.data() + r * n;
    const S* dor = d_o.data.data() + r * n;
    S* out = dpre.data.data() + r * 3 * n;
    for (index_t j = 0; j < n; ++j) {
      const S fv = gr[j], ov = gr[n + j], zv = gr[2 * n + j];
      out[j] = (df[j] - dimp[j] * zv) * fv * (S(1) - fv);
      out[n + j] = dor[j] * ov * (S(1) - ov);
      out[2 * n + j] = dimp[j] * (S(1) - fv) * (S(1) - zv * zv);
    }
  }

  accumulate_bias_grad(dpre, grads.bias);
  Tensor3<S> dx(T, b, m);
  for (index_t s = 0; s < k && s < T; ++s) {
    const index_t nrows = (T - s) * b;
    // dW_s += dpre[s..]^T x[..T-s]
    gemm_tn(dpre.data.data() + s * b * 3 * n, nrows, 3 * n, x.data.data(), m,
            grads.W[size_t(s)].data.data(), /*accumulate=*/true);
    // dx[..T-s] += dpre[s..] W_s
    gemm_nn(dpre.data.data() + s * b * 3 * n, nrows, 3 * n,
            p.W[size_t(s)].data.data(), m, dx.data.data(),
            /*accumulate=*/true);
  }

  if (d_c0) *d_c0 = std::move(rec.d_initial);
  return dx;
}

// ---- serial LSTM baseline ------------------------------------------------
//
//   [f i o z]_t = act(U h_{t-1} + V x_t + b)
//   c_t = f_t (*) c_{t-1} + i_t (*) z_t
//   h_t = o_t (*) c_t
//
// The input-to-gate product V x_t is hoisted out of the time loop and done
// as one matrix product over all steps; the h_{t-1} dependence is honestly
// sequential.

template <class S>
struct LstmParams {
  Tensor2<S> U;     // [4n x n]
  Tensor2<S> V;     // [4n x m]
  Tensor2<S> bias;  // [1 x 4n]

  index_t input() const { return V.cols; }
  index_t hidden() const { return U.cols; }

  std::vector<Tensor2<S>*> tensors() { return {&U, &V, &bias}; }
};

template <class S>
LstmParams<S> lstm_init(Rng& rng, index_t m, index_t n, double gate_bias) {
  LstmParams<S> p;
  p.U = init_uniform<S>(rng, 4 * n, n, 1.0 / std::sqrt(double(n)));
  p.V = init_uniform<S>(rng, 4 * n, m, 1.0 / std::sqrt(double(m)));
  p.bias = Tensor2<S>(1, 4 * n);
  for (index_t j = 0; j < n; ++j) p.bias.at(0, j) = S(gate_bias);  // f block
  return p;
}

template <class S>
struct LstmCache {
  Tensor3<S> gates;  // [T, b, 4n] activated, blocks f,i,o,z
  Tensor3<S> c, h;
};

template <class S>
struct LstmGrads {
  Tensor2<S> U, V, bias;

  explicit LstmGrads(const LstmParams<S>& p)
      : U(p.U.rows, p.U.cols), V(p.V.rows, p.V.cols), bias(1, p.bias.cols) {}

  std::vector<Tensor2<S>*> tensors() { return {&U, &V, &bias}; }
};

template <class S>
Tensor3<S> lstm_forward(const LstmParams<S>& p, const Tensor3<S>& x,
                        const Tensor2<S>& h0, const Tensor2<S>& c0,
                        LstmCache<S>* cache = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden();
  if (x.features != p.input())
    contract_fail("lstm_forward: input feature mismatch");

  Tensor3<S> gates(T, b, 4 * n);
  affine(x, p.V, p.bias, gates);  // all steps at once

  Tensor3<S> c(T, b, n), h(T, b, n);
  const S* h_prev = h0.data.data();
  const S* c_prev = c0.data.data();
  for (index_t t = 0; t < T; ++t) {
    S* g = gates.step(t).data();
    gemm_nt(h_prev, b, n, p.U.data.data(), 4 * n, g, /*accumulate=*/true);
    S* ct = c.step(t).data();
    S* ht = h.step(t).data();
    for (index_t r = 0; r < b; ++r) {
      S* gr = g + r * 4 * n;
      for (index_t j = 0; j < 4 * n; ++j)
        gr[j] = j < 3 * n ? sigmoid(gr[j]) : std::tanh(gr[j]);
      for (index_t j = 0; j < n; ++j) {
        const S cv = gr[j] * c_prev[r * n + j] + gr[n + j] * gr[3 * n + j];
        ct[r * n + j] = cv;
        ht[r * n + j] = gr[2 * n + j] * cv;
      }
    }
    h_prev = ht;
    c_prev = ct;
  }

  if (cache) {
    cache->gates = std::move(gates);
    cache->c = std::move(c);
    cache->h = h;
  }
  return h;
}

template <class S>
Tensor3<S> lstm_backward(const LstmParams<S>& p, const Tensor3<S>& x,
                         const Tensor2<S>& h0, const Tensor2<S>& c0,
                         const LstmCache<S>& cache, const Tensor3<S>& d_h,
                         LstmGrads<S>& grads, Tensor2<S>* d_h0 = nullptr,
                         Tensor2<S>* d_c0 = nullptr) {
  const index_t T = x.steps, b = x.batch, n = p.hidden();

  Tensor3<S> dpre(T, b, 4 * n);
  Tensor2<S> dh_carry(b, n), dc_carry(b, n);
  for (index_t t = T - 1; t >= 0; --t) {
    const S* g = cache.gates.step(t).data();
    const S* ct = cache.c.step(t).data();
    const S* cprev = (t == 0) ? c0.data.data() : cache.c.step(t - 1).data();
    const S* dht = d_h.step(t).data();
    S* out = dpre.step(t).data();
    for (index_t r = 0; r < b; ++r) {
      const S* gr = g + r * 4 * n;
      S* o = out + r * 4 * n;
      for (index_t j = 0; j < n; ++j) {
        const S fv = gr[j], iv = gr[n + j], ov = gr[2 * n + j],
                zv = gr[3 * n + j];
        const S dh = dht[r * n + j] + dh_carry.data[size_t(r * n + j)];
        const S dc = dh * ov + dc_carry.data[size_t(r * n + j)];
        o[j] = dc * cprev[r * n + j] * fv * (S(1) - fv);
        o[n + j] = dc * zv * iv * (S(1) - iv);
        o[2 * n + j] = dh * ct[r * n + j] * ov * (S(1) - ov);
        o[3 * n + j] = dc * iv * (S(1) - zv * zv);
        dc_carry.data[size_t(r * n + j)] = dc * fv;
      }
    }
    // dh_{t-1} = dpre_t U, one [b,4n]x[4n,n] product per step
    gemm_nn(out, b, 4 * n, p.U.data.data(), n, dh_carry.data.data(),
            /*accumulate=*/false);
  }

  Tensor3<S> h_prev = detail::shift_right(cache.h, h0);
  accumulate_weight_grad(dpre, h_prev, grads.U);
  accumulate_weight_grad(dpre, x, grads.V);
  accumulate_bias_grad(dpre, grads.bias);

  Tensor3<S> dx(T, b, p.input());
  accumulate_input_grad(dpre, p.V, dx, /*accumulate=*/false);
  if (d_h0) *d_h0 = std::move(dh_carry);
  if (d_c0) *d_c0 = std::move(dc_carry);
  return dx;
}

}  // namespace linrec
