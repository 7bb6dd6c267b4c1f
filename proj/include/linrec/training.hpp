#pragma once

// Synthetic long-dependency classification: sequences of one-hot symbols
// whose first step is +e1 or -e1; the model must output that sign after
// seeing the remaining T-1 steps of noise. A run trains a two-layer
// recurrent model with a linear readout on the final hidden state until it
// scores `window` consecutive perfect minibatches.

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linrec/layers.hpp"

namespace linrec {

template <class S>
struct SyntheticBatch {
  Tensor3<S> inputs;        // [T, b, p] one-hot rows
  std::vector<int> labels;  // b entries, 1 when step 1 is +e1 else 0
};

/// Step 1 is +-e1 with equal probability (sign = label); steps 2..T are
/// uniform one-hot draws over the p symbols.
template <class S>
SyntheticBatch<S> generate_batch(Rng& rng, index_t T, index_t b, index_t p) {
  if (p < 2) contract_fail("generate_batch: input_dim must be >= 2");
  if (T < 1) contract_fail("generate_batch: seq_len must be >= 1");
  SyntheticBatch<S> batch{Tensor3<S>(T, b, p), std::vector<int>(size_t(b))};
  for (index_t r = 0; r < b; ++r) {
    const bool positive = rng.coin();
    batch.labels[size_t(r)] = positive ? 1 : 0;
    batch.inputs.at(0, r, 0) = positive ? S(1) : S(-1);
    for (index_t t = 1; t < T; ++t)
      batch.inputs.at(t, r, index_t(rng.below(std::uint64_t(p)))) = S(1);
  }
  return batch;
}

struct TrainConfig {
  std::string arch = "gilr-lstm";  // or "lstm-serial"
  index_t seq_len = 1024;
  index_t input_dim = 128;
  index_t hidden = 64;
  index_t layers = 2;  // fixed by the experiment
  index_t batch = 32;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  index_t max_iters = 5000;
  std::uint64_t seed = 0;
  index_t window = 5;
  double gate_bias = 1.0;
  double clip_norm = 1.0;
  bool time_data_gen = true;  // false: timing covers train_step only

  void validate() const {
    if (seq_len < 1 || input_dim < 2 || hidden < 1 || batch < 1 ||
        max_iters < 1 || window < 1 || layers != 2)
      contract_fail("TrainConfig: counts out of range");
    if (!(learning_rate > 0))
      contract_fail("TrainConfig: learning rate must be > 0");
    if (arch != "gilr-lstm" && arch != "lstm-serial")
      contract_fail("TrainConfig: unknown arch \"" + arch + "\"");
  }
};

// ---- model --------------------------------------------------------------

template <class S>
struct Model {
  std::string arch;
  std::vector<GilrLstmParams<S>> gl;  // two entries when arch == gilr-lstm
  std::vector<LstmParams<S>> ls;      // two entries when arch == lstm-serial
  Tensor2<S> W_out;                   // [2 x n]
  Tensor2<S> b_out;                   // [1 x 2]

  index_t hidden() const { return W_out.cols; }

  std::vector<Tensor2<S>*> tensors() {
    std::vector<Tensor2<S>*> v;
    for (auto& l : gl)
      for (auto* t : l.tensors()) v.push_back(t);
    for (auto& l : ls)
      for (auto* t : l.tensors()) v.push_back(t);
    v.push_back(&W_out);
    v.push_back(&b_out);
    return v;
  }

  index_t parameter_count() const {
    index_t total = W_out.size() + b_out.size();
    for (const auto& l : gl)
      total += gilr_lstm_parameter_count(l.input(), l.hidden());
    for (const auto& l : ls)
      total += lstm_parameter_count(l.input(), l.hidden());
    return total;
  }
};

template <class S>
Model<S> build_model(const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  Model<S> m;
  m.arch = cfg.arch;
  const index_t p = cfg.input_dim, n = cfg.hidden;
  Rng r1 = rng.split(101), r2 = rng.split(102), r3 = rng.split(103);
  if (cfg.arch == "gilr-lstm") {
    m.gl.push_back(gilr_lstm_init<S>(r1, p, n, cfg.gate_bias));
    m.gl.push_back(gilr_lstm_init<S>(r2, n, n, cfg.gate_bias));
  } else {
    m.ls.push_back(lstm_init<S>(r1, p, n, cfg.gate_bias));
    m.ls.push_back(lstm_init<S>(r2, n, n, cfg.gate_bias));
  }
  m.W_out = init_uniform<S>(r3, 2, n, 1.0 / std::sqrt(double(n)));
  m.b_out = Tensor2<S>(1, 2);
  return m;
}

template <class S>
struct ModelGrads {
  std::vector<GilrLstmGrads<S>> gl;
  std::vector<LstmGrads<S>> ls;
  Tensor2<S> W_out, b_out;

  explicit ModelGrads(const Model<S>& m)
      : W_out(m.W_out.rows, m.W_out.cols), b_out(1, m.b_out.cols) {
    for (const auto& l : m.gl) gl.emplace_back(l);
    for (const auto& l : m.ls) ls.emplace_back(l);
  }

  std::vector<Tensor2<S>*> tensors() {
    std::vector<Tensor2<S>*> v;
    for (auto& l : gl)
      for (auto* t : l.tensors()) v.push_back(t);
    for (auto& l : ls)
      for (auto* t : l.tensors()) v.push_back(t);
    v.push_back(&W_out);
    v.push_back(&b_out);
    return v;
  }
};

template <class S>
struct ModelCache {
  std::vector<GilrLstmCache<S>> gl;
  std::vector<LstmCache<S>> ls;
  Tensor3<S> h1;         // layer-1 output (layer-2 input)
  Tensor3<S> h2;         // layer-2 output
  Tensor2<S> logits;     // [b, 2]
  Tensor2<S> zero_state; // shared all-zero initial state [b, n]
};

/// Forward to logits; every initial state is zeros.
template <class S>
void model_forward(Model<S>& m, const Tensor3<S>& x, ScanMode mode,
                   ThreadPool& pool, ModelCache<S>& cache) {
  const index_t b = x.batch, n = m.hidden();
  cache.zero_state = Tensor2<S>(b, n);
  const Tensor2<S>& z = cache.zero_state;

  if (m.arch == "gilr-lstm") {
    cache.gl.resize(2);
    cache.h1 = gilr_lstm_forward(m.gl[0], x, z, z, mode, pool, &cache.gl[0]);
    cache.h2 =
        gilr_lstm_forward(m.gl[1], cache.h1, z, z, mode, pool, &cache.gl[1]);
  } else {
    cache.ls.resize(2);
    cache.h1 = lstm_forward(m.ls[0], x, z, z, &cache.ls[0]);
    cache.h2 = lstm_forward(m.ls[1], cache.h1, z, z, &cache.ls[1]);
  }

  // readout on the final step only
  cache.logits = Tensor2<S>(b, 2);
  const index_t T = x.steps;
  gemm_nt(cache.h2.step(T - 1).data(), b, n, m.W_out.data.data(), 2,
          cache.logits.data.data());
  for (index_t r = 0; r < b; ++r)
    for (index_t j = 0; j < 2; ++j)
      cache.logits.at(r, j) += m.b_out.at(0, j);
}

/// Mean softmax cross-entropy and argmax accuracy for binary labels.
/// d_logits (when non-null) receives (softmax - onehot) / b.
template <class S>
double softmax_loss(const Tensor2<S>& logits, const std::vector<int>& labels,
                    double* accuracy, Tensor2<S>* d_logits = nullptr) {
  const index_t b = logits.rows;
  if (index_t(labels.size()) != b)
    contract_fail("softmax_loss: label count mismatch");
  double loss = 0;
  index_t correct = 0;
  if (d_logits) *d_logits = Tensor2<S>(b, 2);
  for (index_t r = 0; r < b; ++r) {
    const double a = double(logits.at(r, 0));
    const double c = double(logits.at(r, 1));
    const double mx = std::max(a, c);
    const double ea = std::exp(a - mx), ec = std::exp(c - mx);
    const double zsum = ea + ec;
    const int y = labels[size_t(r)];
    const double py = (y == 1 ? ec : ea) / zsum;
    loss -= std::log(py);
    const int pred = c > a ? 1 : 0;
    if (pred == y) ++correct;
    if (d_logits) {
      d_logits->at(r, 0) = S((ea / zsum - (y == 0 ? 1.0 : 0.0)) / double(b));
      d_logits->at(r, 1) = S((ec / zsum - (y == 1 ? 1.0 : 0.0)) / double(b));
    }
  }
  if (accuracy) *accuracy = double(correct) / double(b);
  return loss / double(b);
}

template <class S>
void model_backward(Model<S>& m, const Tensor3<S>& x,
                    const ModelCache<S>& cache, const Tensor2<S>& d_logits,
                    ScanMode mode, ThreadPool& pool, ModelGrads<S>& grads) {
  const index_t T = x.steps, b = x.batch, n = m.hidden();
  const Tensor2<S>& z = cache.zero_state;

  // readout
  gemm_tn(d_logits.data.data(), b, 2, cache.h2.step(T - 1).data(), n,
          grads.W_out.data.data(), /*accumulate=*/true);
  for (index_t r = 0; r < b; ++r)
    for (index_t j = 0; j < 2; ++j)
      grads.b_out.at(0, j) += d_logits.at(r, j);

  Tensor3<S> d_h2(T, b, n);  // zero except the last step
  gemm_nn(d_logits.data.data(), b, 2, m.W_out.data.data(), n,
          d_h2.step(T - 1).data(), /*accumulate=*/false);

  if (m.arch == "gilr-lstm") {
    Tensor3<S> d_h1 = gilr_lstm_backward(m.gl[1], cache.h1, z, z, cache.gl[1],
                                         d_h2, mode, pool, grads.gl[1]);
    gilr_lstm_backward(m.gl[0], x, z, z, cache.gl[0], d_h1, mode, pool,
                       grads.gl[0]);
  } else {
    Tensor3<S> d_h1 = lstm_backward(m.ls[1], cache.h1, z, z, cache.ls[1],
                                    d_h2, grads.ls[1]);
    lstm_backward(m.ls[0], x, z, z, cache.ls[0], d_h1, grads.ls[0]);
  }
}

// ---- optimizer ----------------------------------------------------------

template <class S>
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;
  std::vector<std::vector<double>> m_, v_;  // f64 state regardless of S

  void init(const std::vector<Tensor2<S>*>& params) {
    m_.clear();
    v_.clear();
    for (auto* p : params) {
      m_.emplace_back(p->data.size(), 0.0);
      v_.emplace_back(p->data.size(), 0.0);
    }
    step = 0;
  }

  void update(const std::vector<Tensor2<S>*>& params,
              const std::vector<Tensor2<S>*>& grads) {
    if (m_.size() != params.size())
      contract_fail("Adam: state/parameter mismatch");
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, double(step));
    const double bc2 = 1.0 - std::pow(beta2, double(step));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i]->data;
      const auto& g = grads[i]->data;
      for (size_t j = 0; j < p.size(); ++j) {
        const double gj = double(g[j]);
        m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * gj;
        v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * gj * gj;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        p[j] = S(double(p[j]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

/// Scales gradients in place so their global L2 norm is at most max_norm;
/// returns the pre-clip norm.
template <class S>
double clip_global_norm(const std::vector<Tensor2<S>*>& grads,
                        double max_norm) {
  double sq = 0;
  for (auto* g : grads)
    for (S v : g->data) sq += double(v) * double(v);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double scale = max_norm / norm;
    for (auto* g : grads)
      for (S& v : g->data) v = S(double(v) * scale);
  }
  return norm;
}

// ---- training loop ------------------------------------------------------

template <class S>
struct Trainer {
  Model<S> model;
  ModelGrads<S> grads;
  Adam<S> opt;
  double clip_norm;

  Trainer(const TrainConfig& cfg, Rng& rng)
      : model(build_model<S>(cfg, rng)),
        grads(model),
        clip_norm(cfg.clip_norm) {
    opt.lr = cfg.learning_rate;
    opt.init(model.tensors());
  }

  /// One optimizer step on one batch; returns (loss, accuracy).
  std::pair<double, double> train_step(const SyntheticBatch<S>& batch,
                                       ScanMode mode, ThreadPool& pool) {
    ModelCache<S> cache;
    model_forward(model, batch.inputs, mode, pool, cache);
    double acc = 0;
    Tensor2<S> d_logits;
    const double loss =
        softmax_loss(cache.logits, batch.labels, &acc, &d_logits);
    if (!std::isfinite(loss)) return {loss, acc};  // caller handles divergence

    for (auto* g : grads.tensors()) g->data.assign(g->data.size(), S(0));
    model_backward(model, batch.inputs, cache, d_logits, mode, pool, grads);
    clip_global_norm(grads.tensors(), clip_norm);
    opt.update(model.tensors(), grads.tensors());
    return {loss, acc};
  }
};

struct TraceRow {
  index_t iteration;  // 1-based
  double loss;
  double accuracy;
  double elapsed_seconds;  // cumulative timed seconds at row end
};

struct RunReport {
  bool converged = false;
  bool diverged = false;
  index_t iterations = 0;
  double elapsed_seconds = 0;
  std::vector<TraceRow> trace;
  std::string diagnostic;
};

/// Convergence bookkeeping shared by the real experiment and tests: calls
/// step(iter) until `window` consecutive rows report accuracy exactly 1.0,
/// divergence (non-finite loss), or max_iters. `clock` supplies the
/// cumulative seconds recorded per row (wall time by default; the
/// kernel-only mode passes its own stopwatch).
inline RunReport run_loop(
    const TrainConfig& cfg,
    const std::function<std::pair<double, double>(index_t)>& step,
    std::function<double()> clock = {}) {
  RunReport report;
  index_t streak = 0;
  const auto start = std::chrono::steady_clock::now();
  if (!clock)
    clock = [start] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           start)
          .count();
    };
  for (index_t iter = 1; iter <= cfg.max_iters; ++iter) {
    auto [loss, acc] = step(iter);
    const double elapsed = clock();
    report.trace.push_back({iter, loss, acc, elapsed});
    report.iterations = iter;
    report.elapsed_seconds = elapsed;
    if (!std::isfinite(loss)) {
      report.diverged = true;
      report.diagnostic = "non-finite loss at iteration " +
                          std::to_string(iter) + "; run aborted";
      return report;
    }
    streak = (acc == 1.0) ? streak + 1 : 0;
    if (streak >= cfg.window) {
      report.converged = true;
      return report;
    }
  }
  report.diagnostic = "maximum iterations reached without convergence";
  return report;
}

/// The full experiment: fresh batches every iteration, one model, one
/// optimizer. Deterministic given (seed, workers).
template <class S>
RunReport run_experiment(const TrainConfig& cfg, ThreadPool& pool,
                         ScanMode mode = ScanMode::Parallel,
                         Model<S>* final_model = nullptr) {
  cfg.validate();
  Rng root(cfg.seed);
  Rng param_rng = root.split(1);
  Rng data_rng = root.split(2);
  Trainer<S> trainer(cfg, param_rng);

  if (cfg.time_data_gen) {
    auto report = run_loop(cfg, [&](index_t) {
      auto batch =
          generate_batch<S>(data_rng, cfg.seq_len, cfg.batch, cfg.input_dim);
      return trainer.train_step(batch, mode, pool);
    });
    if (final_model) *final_model = trainer.model;
    return report;
  }

  // kernel-only accounting: generate outside the stopwatch
  auto timed = std::make_shared<double>(0.0);
  auto step = [&, timed](index_t) {
    auto batch =
        generate_batch<S>(data_rng, cfg.seq_len, cfg.batch, cfg.input_dim);
    const auto t0 = std::chrono::steady_clock::now();
    auto result = trainer.train_step(batch, mode, pool);
    *timed +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return result;
  };
  auto report = run_loop(cfg, step, [timed] { return *timed; });
  if (final_model) *final_model = trainer.model;
  return report;
}

// ---- reporting ----------------------------------------------------------

inline nlohmann::json config_to_json(const TrainConfig& cfg) {
  return {{"arch", cfg.arch},
          {"seq_len", cfg.seq_len},
          {"input_dim", cfg.input_dim},
          {"hidden", cfg.hidden},
          {"layers", cfg.layers},
          {"batch", cfg.batch},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", cfg.optimizer},
          {"max_iters", cfg.max_iters},
          {"seed", cfg.seed},
          {"window", cfg.window},
          {"gate_bias", cfg.gate_bias},
          {"clip_norm", cfg.clip_norm},
          {"time_data_gen", cfg.time_data_gen}};
}

/// Everything but the trace; wall-clock fields are the declared source of
/// run-to-run nondeterminism.
inline nlohmann::json report_to_json(const TrainConfig& cfg,
                                     const RunReport& report) {
  nlohmann::json j{{"config", config_to_json(cfg)},
                   {"converged", report.converged},
                   {"diverged", report.diverged},
                   {"iterations", report.iterations},
                   {"elapsed_seconds", report.elapsed_seconds},
                   {"final_loss",
                    report.trace.empty() ? 0.0 : report.trace.back().loss},
                   {"final_accuracy",
                    report.trace.empty() ? 0.0 : report.trace.back().accuracy}};
  if (!report.diagnostic.empty()) j["diagnostic"] = report.diagnostic;
  return j;
}

inline void write_trace_csv(std::ostream& out, const RunReport& report) {
  out << "iteration,loss,accuracy,elapsed_seconds\n";
  for (const auto& row : report.trace) {
    out << row.iteration << ',';
    const auto old = out.precision(17);
    out << row.loss << ',' << row.accuracy << ',';
    out.precision(6);
    out << row.elapsed_seconds << '\n';
    out.precision(old);
  }
}

}  // namespace linrec
