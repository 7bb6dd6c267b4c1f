#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "linrec/bench.hpp"

using namespace linrec;

namespace {

BenchConfig tiny_kernel_config() {
  BenchConfig cfg;
  cfg.seq_lens = {4, 16};
  cfg.features = {2};
  cfg.batches = {2};
  cfg.worker_counts = {1, 2};
  cfg.warmup = 1;
  cfg.reps = 3;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("predicted_speedup matches the closed form") {
  CHECK(predicted_speedup(1, 1000) == doctest::Approx(1.0 / 3.0));
  // large-T crossover at p=3
  for (index_t T : {index_t(10000), index_t(100000), index_t(1 << 20)}) {
    const double s = predicted_speedup(3, T);
    CHECK(s >= 0.95);
    CHECK(s <= 1.0);
  }
  CHECK(predicted_speedup(96, 65536) == doctest::Approx(32.0).epsilon(1e-3));
  // short sequences lose
  CHECK(predicted_speedup(3, 16) < 1.0);
  CHECK_THROWS_AS(predicted_speedup(0, 8), ContractViolation);
  CHECK_THROWS_AS(predicted_speedup(4, 0), ContractViolation);
}

TEST_CASE("predicted_speedup is monotone in p and saturates at p/3") {
  for (index_t T : {index_t(64), index_t(4096)}) {
    double prev = 0;
    for (int p = 1; p <= 64; p *= 2) {
      const double s = predicted_speedup(p, T);
      CHECK(s > prev);
      prev = s;
    }
  }
  const double s = predicted_speedup(8, index_t(1) << 40);
  CHECK(s == doctest::Approx(8.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("bench_kernel emits paired records with the events identity") {
  auto cfg = tiny_kernel_config();
  auto records = bench_kernel<double>(cfg);
  REQUIRE(records.size() == 8);  // 2 T x 1 n x 1 b x 2 w, two impls each
  for (size_t i = 0; i < records.size(); i += 2) {
    const auto& s = records[i];
    const auto& p = records[i + 1];
    CHECK(s.impl == "serial");
    CHECK(p.impl == "parallel");
    CHECK_FALSE(s.skipped);
    CHECK(s.T == p.T);
    CHECK(s.workers == p.workers);
    CHECK(s.input_checksum == p.input_checksum);  // identical inputs
    CHECK(s.speedup == 1.0);
    CHECK(p.speedup > 0);
    for (const auto* r : {&s, &p}) {
      CHECK(r->events_per_sec > 0);
      const double expect =
          double(r->b) * double(r->T) * double(r->reps) / r->seconds;
      CHECK(r->events_per_sec == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(p.speedup ==
          doctest::Approx(s.seconds / p.seconds).epsilon(1e-12));
  }
  // grid order: T-major then workers
  CHECK(records[0].T == 4);
  CHECK(records[0].workers == 1);
  CHECK(records[2].workers == 2);
  CHECK(records[4].T == 16);
}

TEST_CASE("bench input checksums are reproducible across runs") {
  auto cfg = tiny_kernel_config();
  auto a = bench_kernel<double>(cfg);
  auto b = bench_kernel<double>(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].input_checksum == b[i].input_checksum);
}

TEST_CASE("over-budget grid points are skipped with a warning") {
  auto cfg = tiny_kernel_config();
  cfg.mem_budget_bytes = 1;
  auto records = bench_kernel<double>(cfg);
  REQUIRE(records.size() == 4);  // one warning per grid point
  for (const auto& r : records) {
    CHECK(r.skipped);
    CHECK(r.warning.find("exceeds budget") != std::string::npos);
  }
}

TEST_CASE("csv output has the declared header and one row per record") {
  auto cfg = tiny_kernel_config();
  cfg.seq_lens = {4};
  cfg.worker_counts = {2};
  auto records = bench_kernel<double>(cfg);
  std::ostringstream out;
  write_bench_csv(out, records, {"protocol: median of 3", "seed=5"});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# protocol: median of 3");
  std::getline(in, line);
  CHECK(line == "# seed=5");
  std::getline(in, line);
  CHECK(line == "T,n,b,workers,impl,events_per_sec,speedup");
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(line.rfind("4,2,2,2,", 0) == 0);
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
    ++rows;
  }
  CHECK(rows == 2);

  // skipped points appear as comments, not data rows
  cfg.mem_budget_bytes = 1;
  std::ostringstream skipped;
  write_bench_csv(skipped, bench_kernel<double>(cfg));
  std::string text = skipped.str();
  CHECK(text.find("# skipped T=4") != std::string::npos);
  CHECK(text.find("4,2,2,2,serial") == std::string::npos);
}

TEST_CASE("bench_model runs every arch at a desk-scale preset") {
  BenchConfig cfg;
  cfg.seq_lens = {4, 16};
  cfg.worker_counts = {2};
  cfg.warmup = 1;
  cfg.reps = 2;
  cfg.seed = 6;
  cfg.model_hidden = 4;
  cfg.model_input = 3;
  cfg.model_bt = 16;
  for (const char* arch : {"gilr", "gilr-lstm", "qrnn-k2"}) {
    auto records = bench_model<double>(arch, cfg);
    REQUIRE(records.size() == 4);
    CHECK(records[0].b == 4);   // bT/T at T=4
    CHECK(records[2].b == 1);   // at T=16
    for (const auto& r : records) {
      CHECK_FALSE(r.skipped);
      CHECK(r.events_per_sec > 0);
      const double expect =
          double(r.b) * double(r.T) * double(r.reps) / r.seconds;
      CHECK(r.events_per_sec == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("bench_model skips impossible grid points") {
  BenchConfig cfg;
  cfg.seq_lens = {4, 16};
  cfg.worker_counts = {1};
  cfg.warmup = 0;
  cfg.reps = 1;
  cfg.model_hidden = 4;
  cfg.model_input = 3;
  cfg.model_bt = 16;

  // k=10 window cannot fit T=4
  auto records = bench_model<double>("qrnn-k10", cfg);
  REQUIRE(records.size() == 3);  // skip + serial/parallel pair at T=16
  CHECK(records[0].skipped);
  CHECK(records[0].warning.find("window") != std::string::npos);
  CHECK_FALSE(records[1].skipped);

  // preset bT not divisible by T
  cfg.seq_lens = {3};
  auto odd = bench_model<double>("gilr", cfg);
  REQUIRE(odd.size() == 1);
  CHECK(odd[0].skipped);

  CHECK_THROWS_AS(bench_model<double>("transformer", cfg),
                  ContractViolation);
}

TEST_CASE("bench config validation rejects empty and degenerate fields") {
  BenchConfig cfg = tiny_kernel_config();
  cfg.seq_lens.clear();
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = tiny_kernel_config();
  cfg.reps = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = tiny_kernel_config();
  cfg.worker_counts = {0};
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
}
