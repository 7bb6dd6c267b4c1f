#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "linrec/training.hpp"
#include "support/oracles.hpp"

using namespace linrec;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.seq_len = 12;
  cfg.input_dim = 8;
  cfg.hidden = 6;
  cfg.batch = 4;
  cfg.max_iters = 6;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("generated batches are one-hot with sign-encoded labels") {
  Rng rng(1);
  for (auto [T, b, p] : {std::array<index_t, 3>{1, 4, 2},
                         {16, 3, 8},
                         {5, 2, 128}}) {
    auto batch = generate_batch<double>(rng, T, b, p);
    REQUIRE(batch.inputs.steps == T);
    REQUIRE(index_t(batch.labels.size()) == b);
    for (index_t r = 0; r < b; ++r) {
      for (index_t t = 0; t < T; ++t) {
        int nonzero = 0;
        double linf = 0, sum = 0;
        for (index_t j = 0; j < p; ++j) {
          const double v = batch.inputs.at(t, r, j);
          if (v != 0.0) ++nonzero;
          linf = std::max(linf, std::fabs(v));
          sum += v;
        }
        CHECK(nonzero == 1);
        CHECK(linf == 1.0);
        CHECK(std::fabs(sum) == 1.0);  // rows sum to +-1
      }
      const double first = batch.inputs.at(0, r, 0);
      CHECK(std::fabs(first) == 1.0);  // step 1 is +-e1
      CHECK(batch.labels[size_t(r)] == (first > 0 ? 1 : 0));
    }
  }
  CHECK_THROWS_AS(generate_batch<double>(rng, 4, 2, 1), ContractViolation);
  CHECK_THROWS_AS(generate_batch<double>(rng, 0, 2, 4), ContractViolation);
}

TEST_CASE("labels only depend on the first step") {
  Rng rng(2);
  auto batch = generate_batch<double>(rng, 10, 8, 16);
  // shuffle steps 2..T; re-deriving labels from step 1 is unaffected
  auto shuffled = batch.inputs;
  std::vector<index_t> order = {5, 3, 9, 1, 7, 2, 8, 4, 6};
  for (size_t i = 0; i < order.size(); ++i)
    std::copy(batch.inputs.step(order[i]).begin(),
              batch.inputs.step(order[i]).end(),
              shuffled.step(index_t(i) + 1).begin());
  for (index_t r = 0; r < 8; ++r)
    CHECK((shuffled.at(0, r, 0) > 0 ? 1 : 0) == batch.labels[size_t(r)]);
}

TEST_CASE("class balance is near one half") {
  Rng rng(3);
  index_t pos = 0, total = 0;
  for (int i = 0; i < 2500; ++i) {
    auto batch = generate_batch<double>(rng, 1, 4, 2);
    for (int y : batch.labels) {
      pos += y;
      ++total;
    }
  }
  // 3 sigma of a fair coin over 10^4 draws
  const double dev = std::fabs(double(pos) / double(total) - 0.5);
  CHECK(dev <= 3.0 * 0.5 / std::sqrt(double(total)));
}

TEST_CASE("build_model validates arch and is seed-deterministic") {
  auto cfg = tiny_config();
  Rng a(9), b(9);
  auto ma = build_model<double>(cfg, a);
  auto mb = build_model<double>(cfg, b);
  auto ta = ma.tensors(), tb = mb.tensors();
  REQUIRE(ta.size() == tb.size());
  for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->data == tb[i]->data);

  // two stacked layers plus the 2n+2 readout
  CHECK(ma.parameter_count() ==
        gilr_lstm_parameter_count(cfg.input_dim, cfg.hidden) +
            gilr_lstm_parameter_count(cfg.hidden, cfg.hidden) + 2 * cfg.hidden +
            2);

  cfg.arch = "lstm-serial";
  Rng c(9);
  auto mc = build_model<double>(cfg, c);
  CHECK(mc.parameter_count() ==
        lstm_parameter_count(cfg.input_dim, cfg.hidden) +
            lstm_parameter_count(cfg.hidden, cfg.hidden) + 2 * cfg.hidden + 2);

  cfg.arch = "gru";
  Rng d(9);
  CHECK_THROWS_AS(build_model<double>(cfg, d), ContractViolation);
}

TEST_CASE("forward produces finite [b,2] logits; zero model gives ln 2") {
  auto cfg = tiny_config();
  ThreadPool pool(2);
  Rng rng(11);
  auto model = build_model<double>(cfg, rng);
  Rng data(12);
  auto batch =
      generate_batch<double>(data, cfg.seq_len, cfg.batch, cfg.input_dim);

  ModelCache<double> cache;
  model_forward(model, batch.inputs, ScanMode::Parallel, pool, cache);
  REQUIRE(cache.logits.rows == cfg.batch);
  REQUIRE(cache.logits.cols == 2);
  CHECK(all_finite(cache.logits.data));

  // uniform logits: loss is exactly ln 2 regardless of labels
  for (auto& v : cache.logits.data) v = 0.0;
  double acc = 0;
  const double loss = softmax_loss(cache.logits, batch.labels, &acc);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("untrained model sits at chance accuracy") {
  auto cfg = tiny_config();
  ThreadPool pool(2);
  Rng rng(13);
  auto model = build_model<double>(cfg, rng);
  Rng data(14);
  double correct = 0, total = 0;
  for (int i = 0; i < 50; ++i) {
    auto batch =
        generate_batch<double>(data, cfg.seq_len, cfg.batch, cfg.input_dim);
    ModelCache<double> cache;
    model_forward(model, batch.inputs, ScanMode::Parallel, pool, cache);
    double acc = 0;
    softmax_loss(cache.logits, batch.labels, &acc);
    correct += acc * double(cfg.batch);
    total += double(cfg.batch);
  }
  CHECK(std::fabs(correct / total - 0.5) < 0.15);  // 200 samples, loose 3s+
}

TEST_CASE("one step on a fixed batch decreases that batch's loss") {
  auto cfg = tiny_config();
  cfg.learning_rate = 1e-3;
  ThreadPool pool(2);
  Rng rng(15);
  Trainer<double> trainer(cfg, rng);
  Rng data(16);
  auto batch =
      generate_batch<double>(data, cfg.seq_len, cfg.batch, cfg.input_dim);

  ModelCache<double> before;
  model_forward(trainer.model, batch.inputs, ScanMode::Parallel, pool, before);
  const double loss_before = softmax_loss(before.logits, batch.labels, nullptr);

  trainer.train_step(batch, ScanMode::Parallel, pool);

  ModelCache<double> after;
  model_forward(trainer.model, batch.inputs, ScanMode::Parallel, pool, after);
  const double loss_after = softmax_loss(after.logits, batch.labels, nullptr);
  CHECK(loss_after < loss_before);
}

TEST_CASE("adam matches a hand-computed first step") {
  // one parameter, g = 0.5: m=0.05, v=0.00025 -> mhat=0.5, vhat=0.25,
  // update = lr * 0.5/(0.5+eps) ~= lr
  Tensor2<double> p(1, 1), g(1, 1);
  p.at(0, 0) = 1.0;
  g.at(0, 0) = 0.5;
  Adam<double> opt;
  opt.lr = 0.1;
  opt.init({&p});
  opt.update({&p}, {&g});
  CHECK(p.at(0, 0) ==
        doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("global norm clip rescales exactly when above the cap") {
  Tensor2<double> a(1, 2), b(1, 1);
  a.data = {3.0, 0.0};
  b.data = {4.0};  // norm 5
  const double norm = clip_global_norm<double>({&a, &b}, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.data[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(b.data[0] == doctest::Approx(0.8).epsilon(1e-15));

  Tensor2<double> c(1, 1);
  c.data = {0.25};
  clip_global_norm<double>({&c}, 1.0);
  CHECK(c.data[0] == 0.25);  // under the cap: untouched
}

TEST_CASE("convergence detector fires after exactly window perfect rows") {
  auto cfg = tiny_config();
  cfg.window = 5;
  cfg.max_iters = 100;

  // hard-wired oracle: always perfect
  auto report = run_loop(cfg, [](index_t) { return std::pair{0.1, 1.0}; });
  CHECK(report.converged);
  CHECK(report.iterations == 5);

  // a stumble resets the streak
  auto stumble = run_loop(cfg, [](index_t iter) {
    return std::pair{0.1, iter == 3 ? 0.9 : 1.0};
  });
  CHECK(stumble.converged);
  CHECK(stumble.iterations == 8);

  // never perfect: runs out the clock
  auto never = run_loop(cfg, [](index_t) { return std::pair{0.1, 0.9}; });
  CHECK_FALSE(never.converged);
  CHECK(never.iterations == 100);
  CHECK(never.diagnostic.find("maximum iterations") != std::string::npos);

  // divergence aborts with a diagnostic naming the iteration
  auto diverged = run_loop(cfg, [](index_t iter) {
    return std::pair{iter == 4 ? std::nan("") : 0.1, 0.5};
  });
  CHECK(diverged.diverged);
  CHECK_FALSE(diverged.converged);
  CHECK(diverged.iterations == 4);
  CHECK(diverged.diagnostic.find("iteration 4") != std::string::npos);
}

TEST_CASE("experiment runs are reproducible given the seed") {
  auto cfg = tiny_config();
  ThreadPool pool(3);
  auto a = run_experiment<double>(cfg, pool);
  auto b = run_experiment<double>(cfg, pool);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss == b.trace[i].loss);  // bitwise
    CHECK(a.trace[i].accuracy == b.trace[i].accuracy);
  }
}

TEST_CASE("gradient signal from step one survives T=1024 in 64-bit") {
  TrainConfig cfg;
  cfg.seq_len = 1024;
  cfg.input_dim = 16;
  cfg.hidden = 8;
  cfg.batch = 2;
  cfg.seed = 21;
  ThreadPool pool(2);
  Rng rng(cfg.seed);
  auto model = build_model<double>(cfg, rng);
  Rng data(22);
  auto batch =
      generate_batch<double>(data, cfg.seq_len, cfg.batch, cfg.input_dim);

  ModelCache<double> cache;
  model_forward(model, batch.inputs, ScanMode::Parallel, pool, cache);
  double acc = 0;
  Tensor2<double> d_logits;
  softmax_loss(cache.logits, batch.labels, &acc, &d_logits);

  ModelGrads<double> grads(model);
  model_backward(model, batch.inputs, cache, d_logits, ScanMode::Parallel,
                 pool, grads);

  // recompute the input gradient of layer 1 to inspect step 1
  Tensor3<double> d_h2(cfg.seq_len, cfg.batch, cfg.hidden);
  gemm_nn(d_logits.data.data(), cfg.batch, 2, model.W_out.data.data(),
          cfg.hidden, d_h2.step(cfg.seq_len - 1).data(), false);
  GilrLstmGrads<double> g2(model.gl[1]), g1(model.gl[0]);
  Tensor3<double> d_h1 =
      gilr_lstm_backward(model.gl[1], cache.h1, cache.zero_state,
                         cache.zero_state, cache.gl[1], d_h2,
                         ScanMode::Parallel, pool, g2);
  Tensor3<double> d_x =
      gilr_lstm_backward(model.gl[0], batch.inputs, cache.zero_state,
                         cache.zero_state, cache.gl[0], d_h1,
                         ScanMode::Parallel, pool, g1);
  bool any_nonzero = false;
  for (auto v : d_x.step(0))
    if (v != 0.0) any_nonzero = true;
  CHECK(any_nonzero);
}

TEST_CASE("trace csv has the declared header and row shape") {
  RunReport report;
  report.trace.push_back({1, 0.6931, 0.5, 0.01});
  report.trace.push_back({2, 0.5, 1.0, 0.02});
  std::ostringstream out;
  write_trace_csv(out, report);
  const std::string text = out.str();
  CHECK(text.rfind("iteration,loss,accuracy,elapsed_seconds\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("report json echoes the resolved config") {
  auto cfg = tiny_config();
  RunReport report;
  report.converged = true;
  report.iterations = 42;
  report.trace.push_back({42, 0.01, 1.0, 3.5});
  auto j = report_to_json(cfg, report);
  CHECK(j["converged"] == true);
  CHECK(j["iterations"] == 42);
  CHECK(j["config"]["arch"] == "gilr-lstm");
  CHECK(j["config"]["input_dim"] == 8);
  CHECK(j["config"]["window"] == 5);
  CHECK(j["config"]["learning_rate"] == 1e-3);
  CHECK(j["final_accuracy"] == 1.0);
}
