#pragma once

// Dense row-major tensors plus the small set of numeric primitives every
// other module is built from: matrix multiply, elementwise math, gate
// activations, bias broadcast, and column reductions. The time-major
// [T, b, n] layout makes one time step a contiguous [b, n] slab, so a whole
// sequence can be fed to the matrix multiply as a single [T*b, m] operand.

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <span>
#include <vector>

#include "linrec/common.hpp"

namespace linrec {

template <class S>
struct Tensor2 {
  index_t rows = 0;
  index_t cols = 0;
  std::vector<S> data;

  Tensor2() = default;
  Tensor2(index_t r, index_t c) : rows(r), cols(c) {
    if (r < 1 || c < 1) contract_fail("Tensor2 dimensions must be >= 1");
    data.assign(static_cast<size_t>(r * c), S(0));
  }

  static Tensor2 zeros(index_t r, index_t c) { return Tensor2(r, c); }

  index_t size() const { return rows * cols; }
  S& operator()(index_t r, index_t c) { return data[size_t(r * cols + c)]; }
  const S& operator()(index_t r, index_t c) const {
    return data[size_t(r * cols + c)];
  }
  S& at(index_t r, index_t c) { return (*this)(r, c); }
  const S& at(index_t r, index_t c) const { return (*this)(r, c); }
  S* row(index_t r) { return data.data() + r * cols; }
  const S* row(index_t r) const { return data.data() + r * cols; }

  bool same_shape(const Tensor2& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

template <class S>
struct Tensor3 {
  index_t steps = 0;    // T
  index_t batch = 0;    // b
  index_t features = 0; // n
  std::vector<S> data;  // row-major [T][b][n]

  Tensor3() = default;
  Tensor3(index_t t, index_t b, index_t n) : steps(t), batch(b), features(n) {
    if (t < 1 || b < 1 || n < 1) contract_fail("Tensor3 dimensions must be >= 1");
    data.assign(static_cast<size_t>(t * b * n), S(0));
  }

  static Tensor3 zeros(index_t t, index_t b, index_t n) {
    return Tensor3(t, b, n);
  }

  index_t step_size() const { return batch * features; }
  index_t size() const { return steps * batch * features; }

  // Contiguous [b, n] slab for one time step; no copy.
  std::span<S> step(index_t t) {
    return {data.data() + t * step_size(), size_t(step_size())};
  }
  std::span<const S> step(index_t t) const {
    return {data.data() + t * step_size(), size_t(step_size())};
  }

  S& operator()(index_t t, index_t i, index_t j) {
    return data[size_t((t * batch + i) * features + j)];
  }
  const S& operator()(index_t t, index_t i, index_t j) const {
    return data[size_t((t * batch + i) * features + j)];
  }
  S& at(index_t t, index_t i, index_t j) { return (*this)(t, i, j); }
  const S& at(index_t t, index_t i, index_t j) const {
    return (*this)(t, i, j);
  }

  bool same_shape(const Tensor3& o) const {
    return steps == o.steps && batch == o.batch && features == o.features;
  }
};

namespace detail {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapM = Eigen::Map<MatRM<S>>;
template <class S>
using MapCM = Eigen::Map<const MatRM<S>>;

}  // namespace detail

// c[M x N] = a[M x K] * b[K x N]   (+= when accumulate)
template <class S>
void gemm_nn(const S* a, index_t m, index_t k, const S* b, index_t n, S* c,
             bool accumulate = false) {
  detail::MapCM<S> A(a, m, k);
  detail::MapCM<S> B(b, k, n);
  detail::MapM<S> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// c[M x N] = a[M x K] * w[N x K]^T   (+= when accumulate)
template <class S>
void gemm_nt(const S* a, index_t m, index_t k, const S* w, index_t n, S* c,
             bool accumulate = false) {
  detail::MapCM<S> A(a, m, k);
  detail::MapCM<S> W(w, n, k);
  detail::MapM<S> C(c, m, n);
  if (accumulate)
    C.noalias() += A * W.transpose();
  else
    C.noalias() = A * W.transpose();
}

// c[K x N] = a[M x K]^T * b[M x N]   (+= when accumulate)
template <class S>
void gemm_tn(const S* a, index_t m, index_t k, const S* b, index_t n, S* c,
             bool accumulate = false) {
  detail::MapCM<S> A(a, m, k);
  detail::MapCM<S> B(b, m, n);
  detail::MapM<S> C(c, k, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

template <class S>
Tensor2<S> matmul(const Tensor2<S>& a, const Tensor2<S>& b) {
  if (a.cols != b.rows) {
    std::ostringstream os;
    os << "matmul: inner dimensions disagree, [" << a.rows << " x " << a.cols
       << "] * [" << b.rows << " x " << b.cols << "]";
    contract_fail(os.str());
  }
  Tensor2<S> out(a.rows, b.cols);
  gemm_nn(a.data.data(), a.rows, a.cols, b.data.data(), b.cols,
          out.data.data());
  return out;
}

// ---- elementwise ops --------------------------------------------------

namespace detail {

template <class S, class F>
void zip_inplace(std::vector<S>& a, const std::vector<S>& b, F f) {
  for (size_t i = 0; i < a.size(); ++i) a[i] = f(a[i], b[i]);
}

}  // namespace detail

template <class S>
void check_same_shape(const Tensor3<S>& a, const Tensor3<S>& b,
                      const char* op) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << op << ": shape mismatch, [" << a.steps << "," << a.batch << ","
       << a.features << "] vs [" << b.steps << "," << b.batch << ","
       << b.features << "]";
    contract_fail(os.str());
  }
}

template <class S>
void check_same_shape(const Tensor2<S>& a, const Tensor2<S>& b,
                      const char* op) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << op << ": shape mismatch, [" << a.rows << "," << a.cols << "] vs ["
       << b.rows << "," << b.cols << "]";
    contract_fail(os.str());
  }
}

template <class S, class T>
T ew_add(const T& a, const T& b) {
  check_same_shape(a, b, "add");
  T out = a;
  detail::zip_inplace(out.data, b.data, [](S x, S y) { return x + y; });
  return out;
}

template <class S>
Tensor3<S> add(const Tensor3<S>& a, const Tensor3<S>& b) {
  return ew_add<S, Tensor3<S>>(a, b);
}
template <class S>
Tensor2<S> add(const Tensor2<S>& a, const Tensor2<S>& b) {
  return ew_add<S, Tensor2<S>>(a, b);
}

template <class S>
Tensor3<S> sub(const Tensor3<S>& a, const Tensor3<S>& b) {
  check_same_shape(a, b, "sub");
  Tensor3<S> out = a;
  detail::zip_inplace(out.data, b.data, [](S x, S y) { return x - y; });
  return out;
}

template <class S>
Tensor3<S> mul(const Tensor3<S>& a, const Tensor3<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor3<S> out = a;
  detail::zip_inplace(out.data, b.data, [](S x, S y) { return x * y; });
  return out;
}
template <class S>
Tensor2<S> mul(const Tensor2<S>& a, const Tensor2<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor2<S> out = a;
  detail::zip_inplace(out.data, b.data, [](S x, S y) { return x * y; });
  return out;
}

template <class S>
Tensor3<S> one_minus(const Tensor3<S>& a) {
  Tensor3<S> out = a;
  for (auto& v : out.data) v = S(1) - v;
  return out;
}

template <class S>
void sigmoid_inplace(Tensor3<S>& a) {
  for (auto& v : a.data) v = sigmoid(v);
}

template <class S>
void activation_inplace(Tensor3<S>& a, Activation act) {
  if (act == Activation::Identity) return;
  for (auto& v : a.data) v = apply_activation(act, v);
}

// out = x @ W^T + bias, treating x as a [T*b, m] matrix (the batched
// evaluation strategy: one multiply covers every time step).
template <class S>
void affine(const Tensor3<S>& x, const Tensor2<S>& w, const Tensor2<S>& bias,
            Tensor3<S>& out, bool accumulate = false) {
  if (w.cols != x.features)
    contract_fail("affine: weight columns must match input features");
  if (bias.rows != 1 || bias.cols != w.rows)
    contract_fail("affine: bias must be [1 x n]");
  if (out.steps != x.steps || out.batch != x.batch || out.features != w.rows)
    contract_fail("affine: output shape mismatch");
  const index_t rows = x.steps * x.batch;
  gemm_nt(x.data.data(), rows, x.features, w.data.data(), w.rows,
          out.data.data(), accumulate);
  if (!accumulate) {
    const S* b = bias.data.data();
    S* o = out.data.data();
    const index_t n = w.rows;
    for (index_t r = 0; r < rows; ++r)
      for (index_t j = 0; j < n; ++j) o[r * n + j] += b[j];
  }
}

// grad[K x N] += a^T b over the flattened [T*b, .] views.
template <class S>
void accumulate_weight_grad(const Tensor3<S>& dpre, const Tensor3<S>& x,
                            Tensor2<S>& dw) {
  const index_t rows = x.steps * x.batch;
  if (dpre.steps * dpre.batch != rows)
    contract_fail("accumulate_weight_grad: row mismatch");
  if (dw.rows != dpre.features || dw.cols != x.features)
    contract_fail("accumulate_weight_grad: grad shape mismatch");
  // dw[n x m] += dpre[rows x n]^T * x[rows x m]
  gemm_tn(dpre.data.data(), rows, dpre.features, x.data.data(), x.features,
          dw.data.data(), /*accumulate=*/true);
}

template <class S>
void accumulate_bias_grad(const Tensor3<S>& dpre, Tensor2<S>& db) {
  if (db.rows != 1 || db.cols != dpre.features)
    contract_fail("accumulate_bias_grad: bias shape mismatch");
  const index_t rows = dpre.steps * dpre.batch;
  const index_t n = dpre.features;
  const S* p = dpre.data.data();
  S* b = db.data.data();
  for (index_t r = 0; r < rows; ++r)
    for (index_t j = 0; j < n; ++j) b[j] += p[r * n + j];
}

// dx[rows x m] (+)= dpre[rows x n] * W[n x m]
template <class S>
void accumulate_input_grad(const Tensor3<S>& dpre, const Tensor2<S>& w,
                           Tensor3<S>& dx, bool accumulate = true) {
  const index_t rows = dpre.steps * dpre.batch;
  if (dx.steps != dpre.steps || dx.batch != dpre.batch ||
      dx.features != w.cols)
    contract_fail("accumulate_input_grad: dx shape mismatch");
  gemm_nn(dpre.data.data(), rows, dpre.features, w.data.data(), w.cols,
          dx.data.data(), accumulate);
}

template <class S>
bool all_finite(const std::vector<S>& v, size_t* first_bad = nullptr) {
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      if (first_bad) *first_bad = i;
      return false;
    }
  }
  return true;
}

}  // namespace linrec
