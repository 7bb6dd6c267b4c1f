#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "linrec/layers.hpp"
#include "linrec/recurrence.hpp"
#include "linrec/rng.hpp"

namespace linrec {

struct VerifyOptions {
  int workers = 1;
  bool use_f32 = false;  // tolerance set for the equivalence sweeps
  uint64_t seed = 0;
  // testing hook: deliberately break a backward pass so the suite's
  // sensitivity is itself checkable
  bool inject_gradient_fault = false;
};

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

namespace verify_detail {

inline double rel_gap(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale <= 1e-7 ? 0.0 : std::fabs(a - b) / scale;
}

// infinity-norm relative gap: max |a-b| over the magnitude of a
template <class S>
double max_rel(const std::vector<S>& a, const std::vector<S>& b) {
  double worst = 0, scale = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(double(a[i]) - double(b[i])));
    scale = std::max(scale, std::fabs(double(a[i])));
  }
  return worst / std::max(scale, 1e-30);
}

template <class S>
RecurrenceInput<S> random_instance(Rng& rng, index_t T, index_t b,
                                   index_t n) {
  RecurrenceInput<S> in{Tensor3<S>(T, b, n), Tensor3<S>(T, b, n),
                        Tensor2<S>(b, n)};
  fill_uniform(rng, in.decays, -1.0, 1.0);
  fill_uniform(rng, in.impulses, -1.0, 1.0);
  fill_uniform(rng, in.initial, -1.0, 1.0);
  return in;
}

// central difference d(sum h)/d(theta_i)
template <class S, class F>
double central_diff(S& theta, double eps, F&& loss) {
  const S saved = theta;
  theta = S(double(saved) + eps);
  const double up = loss();
  theta = S(double(saved) - eps);
  const double down = loss();
  theta = saved;
  return (up - down) / (2 * eps);
}

template <class S>
double sum(const Tensor3<S>& t) {
  double s = 0;
  for (auto v : t.data) s += double(v);
  return s;
}

/// Worst relative disagreement between analytic and centered numeric
/// derivatives over every coordinate of `tensors`.
template <class F>
double fd_worst(std::vector<std::pair<Tensor2<double>*, const Tensor2<double>*>>
                    tensors,
                F&& loss) {
  double worst = 0;
  for (auto& [param, grad] : tensors)
    for (size_t i = 0; i < param->data.size(); ++i) {
      const double numeric = central_diff(param->data[i], 1e-6, loss);
      const double analytic = grad->data[i];
      const double scale = std::max(std::fabs(numeric), std::fabs(analytic));
      if (scale > 1e-7)
        worst = std::max(worst, std::fabs(numeric - analytic) / scale);
    }
  return worst;
}

template <class F>
double fd_worst3(Tensor3<double>& param, const Tensor3<double>& grad,
                 F&& loss) {
  double worst = 0;
  for (size_t i = 0; i < param.data.size(); ++i) {
    const double numeric = central_diff(param.data[i], 1e-6, loss);
    const double analytic = grad.data[i];
    const double scale = std::max(std::fabs(numeric), std::fabs(analytic));
    if (scale > 1e-7)
      worst = std::max(worst, std::fabs(numeric - analytic) / scale);
  }
  return worst;
}

inline std::string gap_detail(double worst, double tol) {
  std::ostringstream s;
  s << "max rel gap " << std::scientific << std::setprecision(2) << worst
    << " (tol " << tol << ")";
  return s.str();
}

}  // namespace verify_detail

/// The full property suite behind the `verify` subcommand. Pure compute;
/// printing is the caller's job.
inline VerifyReport run_verify(const VerifyOptions& opt) {
  using namespace verify_detail;
  VerifyReport report;
  auto add = [&](std::string name, bool ok, std::string detail) {
    report.checks.push_back({std::move(name), ok, std::move(detail)});
  };
  ThreadPool pool(opt.workers < 1 ? ThreadPool::hardware_workers()
                                  : opt.workers);

  // -- chunk plan invariants ----------------------------------------------
  {
    bool ok = true;
    std::string detail = "T in 1..40 and 1000, workers in 1..12";
    for (index_t T : [] {
           std::vector<index_t> v;
           for (index_t t = 1; t <= 40; ++t) v.push_back(t);
           v.push_back(1000);
           return v;
         }())
      for (int w = 1; w <= 12 && ok; ++w) {
        const auto plan = plan_chunks(T, w);
        try {
          validate_plan(plan, T);
        } catch (const ContractViolation& e) {
          ok = false;
          detail = e.what();
          break;
        }
        if (plan.chunks() != std::min<index_t>(w, T)) {
          ok = false;
          detail = "chunk count is not min(workers, T)";
          break;
        }
        index_t lo = T, hi = 0;
        for (auto [s, e] : plan.bounds) {
          lo = std::min(lo, e - s + 1);
          hi = std::max(hi, e - s + 1);
        }
        if (hi - lo > 1) {
          ok = false;
          detail = "chunk lengths differ by more than one";
          break;
        }
      }
    add("chunk plan invariants", ok, detail);
  }

  // -- serial vs parallel equivalence sweep -------------------------------
  {
    Rng rng(opt.seed + 1);
    const double tol = opt.use_f32 ? 1e-5 : 1e-10;
    double worst = 0;
    int instances = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const index_t T = 1 + index_t(rng.below(64));
      const index_t n = std::array<index_t, 3>{1, 3, 32}[rng.below(3)];
      const int w = std::array<int, 4>{1, 2, 4, 8}[rng.below(4)];
      ++instances;
      auto go = [&]<class S>() {
        auto in = random_instance<S>(rng, T, 2, n);
        auto serial = scan_serial(in.decays, in.impulses, in.initial);
        ThreadPool local(w);
        auto parallel = scan_parallel(in.decays, in.impulses, in.initial,
                                      plan_chunks(T, w), local);
        worst = std::max(worst, max_rel(serial.data, parallel.data));
      };
      if (opt.use_f32)
        go.operator()<float>();
      else
        go.operator()<double>();
    }
    add("serial vs parallel equivalence (" + std::to_string(instances) +
            " instances)",
        worst <= tol, gap_detail(worst, tol));
  }

  // -- closed-form identities ---------------------------------------------
  {
    Rng rng(opt.seed + 2);
    const index_t T = 33, b = 2, n = 3;
    Tensor3<double> ones(T, b, n), zeros(T, b, n), x(T, b, n);
    std::fill(ones.data.begin(), ones.data.end(), 1.0);
    for (auto& v : x.data) v = double(int(rng.below(9)) - 4);
    Tensor2<double> h0(b, n);
    for (auto& v : h0.data) v = double(int(rng.below(9)) - 4);

    bool ok = true;
    std::string detail = "prefix sum and pass-through hold exactly";
    auto cumulative = scan_parallel(ones, x, h0, plan_chunks(T, 4), pool);
    for (index_t r = 0; r < b; ++r)
      for (index_t j = 0; j < n; ++j) {
        double run = h0.at(r, j);
        for (index_t t = 0; t < T; ++t) {
          run += x.at(t, r, j);
          if (cumulative.at(t, r, j) != run) ok = false;
        }
      }
    auto pass = scan_parallel(zeros, x, h0, plan_chunks(T, 4), pool);
    if (pass.data != x.data) ok = false;
    if (!ok) detail = "identity violated";
    add("decay=1 prefix sum, decay=0 pass-through", ok, detail);
  }

  // -- two-segment composition --------------------------------------------
  {
    Rng rng(opt.seed + 3);
    const index_t T = 24, b = 2, n = 4, cut = 11;
    auto in = random_instance<double>(rng, T, b, n);
    auto full = scan_serial(in.decays, in.impulses, in.initial);

    auto slice = [&](const Tensor3<double>& t, index_t from, index_t count) {
      Tensor3<double> out(count, b, n);
      std::copy(t.step(from).begin(), t.step(from + count - 1).end(),
                out.data.begin());
      return out;
    };
    auto head = scan_serial(slice(in.decays, 0, cut),
                            slice(in.impulses, 0, cut), in.initial);
    Tensor2<double> mid(b, n);
    std::copy(head.step(cut - 1).begin(), head.step(cut - 1).end(),
              mid.data.begin());
    auto tail = scan_serial(slice(in.decays, cut, T - cut),
                            slice(in.impulses, cut, T - cut), mid);

    bool ok = true;
    for (index_t t = 0; t < T; ++t) {
      const auto& part = t < cut ? head : tail;
      const index_t local = t < cut ? t : t - cut;
      if (!std::equal(full.step(t).begin(), full.step(t).end(),
                      part.step(local).begin()))
        ok = false;
    }
    add("segment composition is exact", ok,
        "restarting from a mid-sequence state changes nothing");
  }

  // -- finite differences: recurrence backward ----------------------------
  {
    Rng rng(opt.seed + 4);
    const index_t T = 7, b = 2, n = 3;
    auto in = random_instance<double>(rng, T, b, n);
    Tensor3<double> d_h(T, b, n);
    fill_uniform(rng, d_h, -1.0, 1.0);

    auto loss = [&] {
      auto h = scan_serial(in.decays, in.impulses, in.initial);
      double s = 0;
      for (size_t i = 0; i < h.data.size(); ++i)
        s += double(h.data[i]) * double(d_h.data[i]);
      return s;
    };
    auto h = scan_serial(in.decays, in.impulses, in.initial);
    auto grads =
        scan_backward(in.decays, in.initial, h, d_h, ScanMode::Serial, pool);
    if (opt.inject_gradient_fault)
      for (auto& v : grads.d_decays.data) v = -v;

    double worst = fd_worst3(in.decays, grads.d_decays, loss);
    worst = std::max(worst, fd_worst3(in.impulses, grads.d_impulses, loss));
    worst = std::max(
        worst, fd_worst({{&in.initial, &grads.d_initial}}, loss));
    add("finite differences: recurrence backward", worst <= 1e-5,
        gap_detail(worst, 1e-5));
  }

  // -- finite differences: the four layers --------------------------------
  {
    Rng rng(opt.seed + 5);
    const index_t T = 6, b = 2, m = 3, n = 4;
    Tensor3<double> x(T, b, m);
    fill_uniform(rng, x, -1.0, 1.0);
    Tensor2<double> s0(b, n);
    fill_uniform(rng, s0, -0.5, 0.5);

    {  // gilr
      auto p = gilr_init<double>(rng, m, n, 0.5);
      auto loss = [&] {
        return sum(gilr_forward(p, x, s0, ScanMode::Serial, pool));
      };
      GilrCache<double> cache;
      gilr_forward(p, x, s0, ScanMode::Serial, pool, &cache);
      Tensor3<double> d_h(T, b, n);
      std::fill(d_h.data.begin(), d_h.data.end(), 1.0);
      GilrGrads<double> g(p);
      Tensor2<double> d_s0(b, n);
      auto d_x =
          gilr_backward(p, x, s0, cache, d_h, ScanMode::Serial, pool, g, &d_s0);
      double worst = fd_worst({{&p.U, &g.U},
                               {&p.V, &g.V},
                               {&p.b_g, &g.b_g},
                               {&p.b_z, &g.b_z},
                               {&s0, &d_s0}},
                              loss);
      worst = std::max(worst, fd_worst3(x, d_x, loss));
      add("finite differences: gilr", worst <= 1e-5, gap_detail(worst, 1e-5));
    }
    {  // gilr-lstm
      auto p = gilr_lstm_init<double>(rng, m, n, 0.5);
      Tensor2<double> c0(b, n);
      fill_uniform(rng, c0, -0.5, 0.5);
      auto loss = [&] {
        return sum(gilr_lstm_forward(p, x, s0, c0, ScanMode::Serial, pool));
      };
      GilrLstmCache<double> cache;
      gilr_lstm_forward(p, x, s0, c0, ScanMode::Serial, pool, &cache);
      Tensor3<double> d_h(T, b, n);
      std::fill(d_h.data.begin(), d_h.data.end(), 1.0);
      GilrLstmGrads<double> g(p);
      Tensor2<double> d_s0(b, n), d_c0(b, n);
      auto d_x = gilr_lstm_backward(p, x, s0, c0, cache, d_h, ScanMode::Serial,
                                    pool, g, &d_s0, &d_c0);
      double worst = fd_worst({{&p.surrogate.U, &g.surrogate.U},
                               {&p.surrogate.V, &g.surrogate.V},
                               {&p.surrogate.b_g, &g.surrogate.b_g},
                               {&p.surrogate.b_z, &g.surrogate.b_z},
                               {&p.U, &g.U},
                               {&p.V, &g.V},
                               {&p.bias, &g.bias},
                               {&s0, &d_s0},
                               {&c0, &d_c0}},
                              loss);
      worst = std::max(worst, fd_worst3(x, d_x, loss));
      add("finite differences: gilr-lstm", worst <= 1e-5,
          gap_detail(worst, 1e-5));
    }
    {  // qrnn, k = 3
      auto p = qrnn_init<double>(rng, m, n, 3, 0.5);
      Tensor2<double> c0(b, n);
      fill_uniform(rng, c0, -0.5, 0.5);
      auto loss = [&] {
        return sum(qrnn_forward(p, x, c0, ScanMode::Serial, pool));
      };
      QrnnCache<double> cache;
      qrnn_forward(p, x, c0, ScanMode::Serial, pool, &cache);
      Tensor3<double> d_h(T, b, n);
      std::fill(d_h.data.begin(), d_h.data.end(), 1.0);
      QrnnGrads<double> g(p);
      Tensor2<double> d_c0(b, n);
      auto d_x =
          qrnn_backward(p, x, c0, cache, d_h, ScanMode::Serial, pool, g, &d_c0);
      std::vector<std::pair<Tensor2<double>*, const Tensor2<double>*>> pairs;
      for (size_t i = 0; i < p.W.size(); ++i) pairs.push_back({&p.W[i], &g.W[i]});
      pairs.push_back({&p.bias, &g.bias});
      pairs.push_back({&c0, &d_c0});
      double worst = fd_worst(pairs, loss);
      worst = std::max(worst, fd_worst3(x, d_x, loss));
      add("finite differences: qrnn", worst <= 1e-5, gap_detail(worst, 1e-5));
    }
    {  // serial lstm baseline
      auto p = lstm_init<double>(rng, m, n, 0.5);
      Tensor2<double> c0(b, n);
      fill_uniform(rng, c0, -0.5, 0.5);
      auto loss = [&] { return sum(lstm_forward(p, x, s0, c0)); };
      LstmCache<double> cache;
      lstm_forward(p, x, s0, c0, &cache);
      Tensor3<double> d_h(T, b, n);
      std::fill(d_h.data.begin(), d_h.data.end(), 1.0);
      LstmGrads<double> g(p);
      Tensor2<double> d_s0(b, n), d_c0(b, n);
      auto d_x = lstm_backward(p, x, s0, c0, cache, d_h, g, &d_s0, &d_c0);
      double worst = fd_worst({{&p.U, &g.U},
                               {&p.V, &g.V},
                               {&p.bias, &g.bias},
                               {&s0, &d_s0},
                               {&c0, &d_c0}},
                              loss);
      worst = std::max(worst, fd_worst3(x, d_x, loss));
      add("finite differences: serial lstm", worst <= 1e-5,
          gap_detail(worst, 1e-5));
    }
  }

  // -- layer outputs vs step-by-step references ---------------------------
  {
    Rng rng(opt.seed + 6);
    const index_t T = 5, b = 2, m = 3, n = 2;
    Tensor3<double> x(T, b, m);
    fill_uniform(rng, x, -1.0, 1.0);
    Tensor2<double> h0(b, n), c0(b, n);
    fill_uniform(rng, h0, -0.5, 0.5);
    fill_uniform(rng, c0, -0.5, 0.5);

    auto matvec = [&](const Tensor2<double>& w, const double* v,
                      const double* bias, index_t row) {
      std::vector<double> out(size_t(w.rows));
      for (index_t i = 0; i < w.rows; ++i) {
        double s = bias ? bias[i] : 0.0;
        for (index_t j = 0; j < w.cols; ++j) s += w.at(i, j) * v[j];
        out[size_t(i)] = s;
      }
      (void)row;
      return out;
    };

    double worst = 0;
    {  // gilr, one step at a time
      auto p = gilr_init<double>(rng, m, n, 1.0);
      auto fast = gilr_forward(p, x, h0, ScanMode::Parallel, pool);
      std::vector<double> h(h0.data.begin(), h0.data.end());
      for (index_t t = 0; t < T; ++t)
        for (index_t r = 0; r < b; ++r) {
          auto g = matvec(p.U, x.step(t).data() + r * m, p.b_g.data.data(), r);
          auto z = matvec(p.V, x.step(t).data() + r * m, p.b_z.data.data(), r);
          for (index_t j = 0; j < n; ++j) {
            const double gate = 1.0 / (1.0 + std::exp(-g[size_t(j)]));
            const double imp = std::tanh(z[size_t(j)]);
            double& state = h[size_t(r * n + j)];
            state = gate * state + (1 - gate) * imp;
            worst = std::max(
                worst, rel_gap(state, double(fast.at(t, r, j))));
          }
        }
    }
    {  // serial lstm, one step at a time
      auto p = lstm_init<double>(rng, m, n, 1.0);
      auto fast = lstm_forward(p, x, h0, c0);
      std::vector<double> h(h0.data.begin(), h0.data.end());
      std::vector<double> c(c0.data.begin(), c0.data.end());
      for (index_t t = 0; t < T; ++t)
        for (index_t r = 0; r < b; ++r) {
          auto pre = matvec(p.V, x.step(t).data() + r * m,
                            p.bias.data.data(), r);
          auto rec = matvec(p.U, h.data() + r * n, nullptr, r);
          for (index_t j = 0; j < 4 * n; ++j) pre[size_t(j)] += rec[size_t(j)];
          for (index_t j = 0; j < n; ++j) {
            const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
            const double f = sig(pre[size_t(j)]);
            const double i = sig(pre[size_t(n + j)]);
            const double o = sig(pre[size_t(2 * n + j)]);
            const double z = std::tanh(pre[size_t(3 * n + j)]);
            double& cell = c[size_t(r * n + j)];
            cell = f * cell + i * z;
            h[size_t(r * n + j)] = o * cell;
            worst = std::max(
                worst, rel_gap(h[size_t(r * n + j)], double(fast.at(t, r, j))));
          }
        }
    }
    const double tol = 1e-12;
    add("layer outputs vs step-by-step references", worst <= tol,
        gap_detail(worst, tol));
  }

  // -- worker invariance ----------------------------------------------------
  {
    Rng rng(opt.seed + 7);
    const double tol = opt.use_f32 ? 1e-5 : 1e-10;
    double worst = 0;
    auto go = [&]<class S>() {
      const index_t T = 257, b = 2, n = 8;
      auto in = random_instance<S>(rng, T, b, n);
      ThreadPool one(1);
      auto base = scan_parallel(in.decays, in.impulses, in.initial,
                                plan_chunks(T, 1), one);
      for (int w : {2, 4, 8}) {
        ThreadPool local(w);
        auto other = scan_parallel(in.decays, in.impulses, in.initial,
                                   plan_chunks(T, w), local);
        worst = std::max(worst, max_rel(base.data, other.data));
      }
      // and through a whole layer
      auto p = gilr_lstm_init<S>(rng, 3, n, 1.0);
      Tensor3<S> x(T, b, 3);
      fill_uniform(rng, x, -1.0, 1.0);
      Tensor2<S> zero(b, n);
      auto ref = gilr_lstm_forward(p, x, zero, zero, ScanMode::Parallel, one);
      ThreadPool local(6);
      auto alt = gilr_lstm_forward(p, x, zero, zero, ScanMode::Parallel, local);
      worst = std::max(worst, max_rel(ref.data, alt.data));
    };
    if (opt.use_f32)
      go.operator()<float>();
    else
      go.operator()<double>();
    add("worker-count invariance", worst <= tol, gap_detail(worst, tol));
  }

  // -- gate ranges -----------------------------------------------------------
  {
    Rng rng(opt.seed + 8);
    const index_t T = 16, b = 3, m = 4, n = 5;
    auto p = gilr_lstm_init<double>(rng, m, n, 1.0);
    Tensor3<double> x(T, b, m);
    fill_uniform(rng, x, -2.0, 2.0);
    Tensor2<double> zero(b, n);
    GilrLstmCache<double> cache;
    gilr_lstm_forward(p, x, zero, zero, ScanMode::Parallel, pool, &cache);
    bool ok = true;
    for (index_t t = 0; t < T && ok; ++t)
      for (index_t r = 0; r < b && ok; ++r)
        for (index_t j = 0; j < 4 * n; ++j) {
          const double v = cache.gates.at(t, r, j);
          const bool sigmoid_block = j < 3 * n;
          if (sigmoid_block ? (v <= 0.0 || v >= 1.0) : (v < -1.0 || v > 1.0)) {
            ok = false;
            break;
          }
        }
    for (double v : cache.surrogate.g.data)
      if (v <= 0.0 || v >= 1.0) ok = false;
    add("gate activations stay in range", ok,
        "sigmoid gates in (0,1), tanh blocks in [-1,1]");
  }

  return report;
}

inline void print_verify_table(std::ostream& out, const VerifyReport& report) {
  size_t width = 0;
  for (const auto& c : report.checks) width = std::max(width, c.name.size());
  for (const auto& c : report.checks)
    out << (c.passed ? "PASS  " : "FAIL  ") << std::left
        << std::setw(int(width + 2)) << c.name << c.detail << "\n";
  out << (report.all_passed() ? "all checks passed" : "FAILURES present")
      << "\n";
}

}  // namespace linrec
