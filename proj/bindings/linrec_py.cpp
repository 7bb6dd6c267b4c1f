// numpy bindings for the recurrence kernel: scan, scan_backward,
// plan_chunks, predicted_speedup. Arrays are [T, batch, features] (C
// order); float32 and float64 are dispatched on the decays dtype and the
// other arguments must match it — no silent casting.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <stdexcept>
#include <string>

#include "linrec/bench.hpp"
#include "linrec/recurrence.hpp"

namespace py = pybind11;
using linrec::index_t;

namespace {

template <class S>
using c_array = py::array_t<S, py::array::c_style | py::array::forcecast>;

template <class S>
void require_dtype(const py::array& a, const char* name) {
  if (a.dtype().num() != py::dtype::of<S>().num())
    throw py::type_error(std::string(name) +
                         ": all arrays must share the decays dtype");
}

template <class S>
linrec::Tensor3<S> tensor3_from(const py::array& a, const char* name) {
  require_dtype<S>(a, name);
  c_array<S> c(a);
  if (c.ndim() != 3)
    throw std::invalid_argument(std::string(name) +
                                " must have shape [T, batch, features]");
  linrec::Tensor3<S> t(index_t(c.shape(0)), index_t(c.shape(1)),
                       index_t(c.shape(2)));
  std::copy(c.data(), c.data() + t.size(), t.data.begin());
  return t;
}

template <class S>
linrec::Tensor2<S> tensor2_from(const py::array& a, const char* name) {
  require_dtype<S>(a, name);
  c_array<S> c(a);
  if (c.ndim() != 2)
    throw std::invalid_argument(std::string(name) +
                                " must have shape [batch, features]");
  linrec::Tensor2<S> t(index_t(c.shape(0)), index_t(c.shape(1)));
  std::copy(c.data(), c.data() + t.size(), t.data.begin());
  return t;
}

template <class S>
py::array_t<S> wrap3(const linrec::Tensor3<S>& t) {
  py::array_t<S> out({py::ssize_t(t.steps), py::ssize_t(t.batch),
                      py::ssize_t(t.features)});
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

template <class S>
py::array_t<S> wrap2(const linrec::Tensor2<S>& t) {
  py::array_t<S> out({py::ssize_t(t.rows), py::ssize_t(t.cols)});
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

linrec::ScanMode mode_from(const std::string& mode) {
  if (mode == "parallel") return linrec::ScanMode::Parallel;
  if (mode == "serial") return linrec::ScanMode::Serial;
  throw std::invalid_argument("mode must be \"parallel\" or \"serial\"");
}

int resolve_workers(int workers) {
  if (workers < 0) throw std::invalid_argument("workers must be >= 0");
  return workers == 0 ? linrec::ThreadPool::hardware_workers() : workers;
}

// Routes to f(S{}) for S in {float, double} based on the probe dtype.
template <class F>
py::object dispatch(const py::array& probe, F&& f) {
  const int num = probe.dtype().num();
  if (num == py::dtype::of<float>().num()) return f(float{});
  if (num == py::dtype::of<double>().num()) return f(double{});
  throw py::type_error("decays must be float32 or float64");
}

py::object scan(const py::array& decays, const py::array& impulses,
                const py::object& initial, int workers,
                const std::string& mode) {
  return dispatch(decays, [&](auto tag) -> py::object {
    using S = decltype(tag);
    auto lam = tensor3_from<S>(decays, "decays");
    auto x = tensor3_from<S>(impulses, "impulses");
    auto h0 = initial.is_none()
                  ? linrec::Tensor2<S>::zeros(lam.batch, lam.features)
                  : tensor2_from<S>(initial.cast<py::array>(), "initial");
    const auto m = mode_from(mode);
    const int w = resolve_workers(workers);
    linrec::Tensor3<S> h;
    {
      py::gil_scoped_release nogil;
      if (m == linrec::ScanMode::Serial) {
        h = linrec::scan_serial(lam, x, h0);
      } else {
        linrec::ThreadPool pool(w);
        h = linrec::scan_parallel(lam, x, h0,
                                  linrec::plan_chunks(lam.steps, w), pool);
      }
    }
    return wrap3(h);
  });
}

py::object scan_backward(const py::array& decays, const py::object& initial,
                         const py::array& h, const py::array& d_h,
                         int workers, const std::string& mode) {
  return dispatch(decays, [&](auto tag) -> py::object {
    using S = decltype(tag);
    auto lam = tensor3_from<S>(decays, "decays");
    auto hh = tensor3_from<S>(h, "h");
    auto dh = tensor3_from<S>(d_h, "d_h");
    auto h0 = initial.is_none()
                  ? linrec::Tensor2<S>::zeros(lam.batch, lam.features)
                  : tensor2_from<S>(initial.cast<py::array>(), "initial");
    const auto m = mode_from(mode);
    const int w = resolve_workers(workers);
    linrec::RecurrenceGradients<S> grads;
    {
      py::gil_scoped_release nogil;
      linrec::ThreadPool pool(w);
      grads = linrec::scan_backward(lam, h0, hh, dh, m, pool);
    }
    return py::make_tuple(wrap3(grads.d_decays), wrap3(grads.d_impulses),
                          wrap2(grads.d_initial));
  });
}

}  // namespace

PYBIND11_MODULE(linrec, m) {
  m.doc() =
      "Parallel evaluation and differentiation of first-order linear "
      "recurrences h[t] = decays[t] * h[t-1] + impulses[t] over the "
      "sequence dimension. Arrays are [T, batch, features], C order, "
      "float32 or float64.";

  m.def("scan", &scan, py::arg("decays"), py::arg("impulses"),
        py::arg("initial") = py::none(), py::kw_only(),
        py::arg("workers") = 0, py::arg("mode") = "parallel",
        "Evaluate the recurrence; returns h with the input shape. "
        "workers=0 uses the hardware count; mode \"serial\" forces the "
        "single-pass reference. Identical inputs, workers, and chunk plans "
        "give bit-identical results.");
  m.def("scan_backward", &scan_backward, py::arg("decays"),
        py::arg("initial"), py::arg("h"), py::arg("d_h"), py::kw_only(),
        py::arg("workers") = 0, py::arg("mode") = "parallel",
        "Gradients of a scalar loss w.r.t. every input, given the forward "
        "output h and upstream d_h. Returns (d_decays, d_impulses, "
        "d_initial).");
  m.def(
      "plan_chunks",
      [](index_t T, int workers) {
        auto plan = linrec::plan_chunks(T, workers);
        return plan.bounds;
      },
      py::arg("T"), py::arg("workers"),
      "Contiguous partition of steps 1..T (1-indexed, inclusive bounds) "
      "used by the parallel scan; effective worker count is min(workers, "
      "T).");
  m.def(
      "predicted_speedup",
      [](int workers, index_t T) {
        return linrec::predicted_speedup(workers, T);
      },
      py::arg("workers"), py::arg("T"),
      "Cost-model speedup p*T / (3*(T + log2(p))) of the chunked scan over "
      "the serial one.");
  m.def(
      "hardware_workers",
      [] { return linrec::ThreadPool::hardware_workers(); },
      "Worker count used when workers=0.");
}
