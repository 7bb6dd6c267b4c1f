#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "linrec/bench.hpp"
#include "linrec/checkpoint.hpp"
#include "linrec/cli_spec.hpp"
#include "linrec/training.hpp"
#include "linrec/verify.hpp"

namespace fs = std::filesystem;
using namespace linrec;
using namespace linrec::cli;

namespace {

struct CommonFlags {
  uint64_t seed = 0;
  int workers = 0;  // 0: unset, fall back to env then hardware
  std::string precision = "f64";
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& common) {
  cmd->add_option("--seed", common.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--workers", common.workers,
                  "worker threads (default: LINREC_WORKERS, then hardware)");
  cmd->add_option("--precision", common.precision, "element type")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  cmd->add_option("--out", common.out, "output path");
}

int resolved_workers(const CommonFlags& common) {
  const auto res = resolve_workers_from_env(common.workers);
  if (!res.error.empty()) throw ContractViolation(res.error);
  return res.workers;
}

nlohmann::json common_echo(const CommonFlags& common, int workers,
                           const char* subcommand) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["seed"] = common.seed;
  j["workers"] = workers;
  j["precision"] = common.precision;
  if (!common.out.empty()) j["out"] = common.out;
  return j;
}

void echo(const nlohmann::json& config) {
  std::cout << "config " << config.dump() << "\n";
}

std::vector<index_t> parse_index_list(const std::string& csv,
                                      const char* flag) {
  std::vector<index_t> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ContractViolation(std::string("invalid value \"") + item +
                              "\" for " + flag +
                              " (expected positive integers)");
    }
  }
  if (out.empty())
    throw ContractViolation(std::string(flag) + " must be a non-empty list");
  return out;
}

// ---- verify ---------------------------------------------------------------

int cmd_verify(const CommonFlags& common, bool inject_fault) {
  const int workers = resolved_workers(common);
  auto config = common_echo(common, workers, "verify");
  config["inject_fault"] = inject_fault;
  echo(config);

  VerifyOptions opt;
  opt.workers = workers;
  opt.use_f32 = common.precision == "f32";
  opt.seed = common.seed;
  opt.inject_gradient_fault = inject_fault;
  const auto report = run_verify(opt);
  print_verify_table(std::cout, report);
  if (!common.out.empty()) {
    std::ofstream file(common.out, std::ios::trunc);
    if (!file.good())
      throw ContractViolation("cannot open --out path " + common.out);
    print_verify_table(file, report);
  }
  return report.all_passed() ? kExitOk : kExitFailure;
}

// ---- bench ----------------------------------------------------------------

struct BenchFlags {
  std::string seq_lens = "16,256,4096,65536";
  std::string features = "32";
  std::string batches = "1";
  index_t warmup = 3, reps = 10;
  size_t mem_budget_mb = 4096;
};

BenchConfig to_bench_config(const CommonFlags& common, const BenchFlags& bench,
                            int workers) {
  BenchConfig cfg;
  cfg.seq_lens = parse_index_list(bench.seq_lens, "--seq-lens");
  cfg.features = parse_index_list(bench.features, "--features");
  cfg.batches = parse_index_list(bench.batches, "--batches");
  cfg.worker_counts = {workers};
  cfg.warmup = bench.warmup;
  cfg.reps = bench.reps;
  cfg.seed = common.seed;
  cfg.mem_budget_bytes = bench.mem_budget_mb << 20;
  return cfg;
}

std::vector<std::string> bench_metadata(const nlohmann::json& config,
                                        const BenchConfig& cfg) {
  return {
      "linrec bench v1",
      "config " + config.dump(),
      "protocol: median of " + std::to_string(cfg.reps) +
          " measured reps after " + std::to_string(cfg.warmup) +
          " warmup reps; seconds = median * reps",
      "events_per_sec and speedup are wall-clock measurements and vary "
      "run to run; all other fields are deterministic given the seed",
  };
}

void write_csv_to(const std::string& path,
                  const std::vector<BenchRecord>& records,
                  const std::vector<std::string>& metadata) {
  if (path.empty()) {
    write_bench_csv(std::cout, records, metadata);
    return;
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file.good()) throw ContractViolation("cannot open --out path " + path);
  write_bench_csv(file, records, metadata);
  std::cout << "wrote " << path << "\n";
}

template <class S>
int run_bench_kernel(const CommonFlags& common, const BenchFlags& bench,
                     const std::string& workers_list) {
  const int workers = resolved_workers(common);
  BenchConfig cfg = to_bench_config(common, bench, workers);
  if (!workers_list.empty()) {
    cfg.worker_counts.clear();
    for (index_t w : parse_index_list(workers_list, "--workers-list"))
      cfg.worker_counts.push_back(int(w));
  }
  auto config = common_echo(common, workers, "bench-kernel");
  config["seq_lens"] = cfg.seq_lens;
  config["features"] = cfg.features;
  config["batches"] = cfg.batches;
  config["worker_counts"] = cfg.worker_counts;
  config["warmup"] = cfg.warmup;
  config["reps"] = cfg.reps;
  echo(config);

  auto records = bench_kernel<S>(cfg);
  write_csv_to(common.out, records, bench_metadata(config, cfg));
  return kExitOk;
}

template <class S>
int run_bench_model(const CommonFlags& common, const BenchFlags& bench,
                    const std::string& arch, const std::string& workers_list,
                    index_t hidden, index_t input, index_t bt) {
  const int workers = resolved_workers(common);
  BenchConfig cfg = to_bench_config(common, bench, workers);
  if (!workers_list.empty()) {
    cfg.worker_counts.clear();
    for (index_t w : parse_index_list(workers_list, "--workers-list"))
      cfg.worker_counts.push_back(int(w));
  }
  cfg.model_hidden = hidden;
  cfg.model_input = input;
  cfg.model_bt = bt;
  auto config = common_echo(common, workers, "bench-model");
  config["arch"] = arch;
  config["seq_lens"] = cfg.seq_lens;
  config["worker_counts"] = cfg.worker_counts;
  config["hidden"] = cfg.model_hidden;
  config["input"] = cfg.model_input;
  config["bt"] = cfg.model_bt;
  config["warmup"] = cfg.warmup;
  config["reps"] = cfg.reps;
  echo(config);

  auto records = bench_model<S>(arch, cfg);
  write_csv_to(common.out, records, bench_metadata(config, cfg));
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

template <class S>
int run_train(const CommonFlags& common, TrainConfig cfg, bool million_steps,
              const std::string& checkpoint_path, bool serial_scan) {
  const int workers = resolved_workers(common);
  cfg.seed = common.seed;
  if (million_steps) cfg.seq_len = index_t(1) << 20;
  cfg.validate();

  auto config = common_echo(common, workers, "train");
  config["train"] = config_to_json(cfg);
  config["scan_mode"] =
      scan_mode_name(serial_scan ? ScanMode::Serial : ScanMode::Parallel);
  config["note"] =
      "elapsed_seconds fields are wall-clock and vary run to run; "
      "loss/accuracy traces are deterministic given seed and workers";
  echo(config);

  ThreadPool pool(workers);
  Model<S> model;
  const auto report = run_experiment<S>(
      cfg, pool, serial_scan ? ScanMode::Serial : ScanMode::Parallel, &model);

  const fs::path dir = common.out.empty() ? fs::path(".") : fs::path(common.out);
  fs::create_directories(dir);
  {
    std::ofstream file(dir / "report.json", std::ios::trunc);
    if (!file.good())
      throw ContractViolation("cannot write " + (dir / "report.json").string());
    file << report_to_json(cfg, report).dump(2) << "\n";
  }
  {
    std::ofstream file(dir / "trace.csv", std::ios::trunc);
    if (!file.good())
      throw ContractViolation("cannot write " + (dir / "trace.csv").string());
    write_trace_csv(file, report);
  }
  if (!checkpoint_path.empty()) save_checkpoint(model, cfg, checkpoint_path);

  std::cout << (report.converged
                    ? "converged at iteration " + std::to_string(report.iterations)
                    : report.diverged ? "diverged: " + report.diagnostic
                                      : "did not converge: " + report.diagnostic)
            << " (" << report.elapsed_seconds << " s)\n"
            << "wrote " << (dir / "report.json").string() << " and "
            << (dir / "trace.csv").string() << "\n";
  return report.diverged ? kExitFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parallel linear recurrence toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonFlags common;

  auto* verify = app.add_subcommand("verify", "run the property suite");
  bool inject_fault = false;
  add_common(verify, common);
  verify
      ->add_flag("--inject-fault", inject_fault,
                 "deliberately break a backward pass (suite sensitivity hook)")
      ->group("");  // hidden

  auto* bench_k = app.add_subcommand("bench-kernel",
                                     "serial vs parallel scan throughput");
  BenchFlags bench;
  std::string workers_list;
  add_common(bench_k, common);
  bench_k->add_option("--seq-lens", bench.seq_lens, "comma list of T")
      ->capture_default_str();
  bench_k->add_option("--features", bench.features, "comma list of n")
      ->capture_default_str();
  bench_k->add_option("--batches", bench.batches, "comma list of b")
      ->capture_default_str();
  bench_k->add_option("--workers-list", workers_list,
                      "comma list of worker counts (overrides --workers)");
  bench_k->add_option("--warmup", bench.warmup, "warmup reps")
      ->capture_default_str();
  bench_k->add_option("--reps", bench.reps, "measured reps")
      ->capture_default_str();
  bench_k->add_option("--mem-budget-mb", bench.mem_budget_mb,
                      "skip grid points above this footprint")
      ->capture_default_str();

  auto* bench_m =
      app.add_subcommand("bench-model", "whole-layer train-step throughput");
  std::string arch = "gilr";
  index_t model_hidden = 256, model_input = 4, model_bt = 65536;
  add_common(bench_m, common);
  bench_m->add_option("--arch", arch, "layer architecture")
      ->check(CLI::IsMember({"gilr", "gilr-lstm", "qrnn-k2", "qrnn-k10"}))
      ->capture_default_str();
  bench_m->add_option("--seq-lens", bench.seq_lens, "comma list of T")
      ->capture_default_str();
  bench_m->add_option("--workers-list", workers_list,
                      "comma list of worker counts (overrides --workers)");
  bench_m->add_option("--hidden", model_hidden, "hidden size")
      ->capture_default_str();
  bench_m->add_option("--input", model_input, "input size")
      ->capture_default_str();
  bench_m->add_option("--bt", model_bt, "events per grid row (b = bt/T)")
      ->capture_default_str();
  bench_m->add_option("--warmup", bench.warmup, "warmup reps")
      ->capture_default_str();
  bench_m->add_option("--reps", bench.reps, "measured reps")
      ->capture_default_str();
  bench_m->add_option("--mem-budget-mb", bench.mem_budget_mb,
                      "skip grid points above this footprint")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "synthetic memorization experiment");
  TrainConfig tcfg;
  bool million_steps = false, serial_scan = false, no_time_data_gen = false;
  std::string checkpoint_path;
  add_common(train, common);
  train->add_option("--arch", tcfg.arch, "gilr-lstm or lstm-serial")
      ->check(CLI::IsMember({"gilr-lstm", "lstm-serial"}))
      ->capture_default_str();
  train->add_option("--seq-len", tcfg.seq_len, "sequence length T")
      ->capture_default_str();
  train->add_option("--input-dim", tcfg.input_dim, "one-hot vocabulary p")
      ->capture_default_str();
  train->add_option("--hidden", tcfg.hidden, "hidden size n")
      ->capture_default_str();
  train->add_option("--batch", tcfg.batch, "minibatch size b")
      ->capture_default_str();
  train->add_option("--lr", tcfg.learning_rate, "adam learning rate")
      ->capture_default_str();
  train->add_option("--max-iters", tcfg.max_iters, "iteration budget")
      ->capture_default_str();
  train->add_option("--window", tcfg.window,
                    "consecutive perfect minibatches to declare convergence")
      ->capture_default_str();
  train->add_option("--gate-bias", tcfg.gate_bias,
                    "initial forget-gate bias (long memory needs larger "
                    "values at long T, e.g. ln(T))")
      ->capture_default_str();
  train->add_option("--clip-norm", tcfg.clip_norm, "global gradient norm cap")
      ->capture_default_str();
  train->add_flag("--million-steps", million_steps,
                  "use the 1,048,576-step sequence length");
  train->add_flag("--serial-scan", serial_scan,
                  "evaluate recurrences serially (baseline timing)");
  train->add_flag("--exclude-data-gen", no_time_data_gen,
                  "exclude batch generation from elapsed_seconds");
  train->add_option("--checkpoint", checkpoint_path,
                    "write the final model here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage
    return kExitUsage;
  }

  try {
    const std::string prec = common.precision;
    if (verify->parsed()) return cmd_verify(common, inject_fault);
    if (bench_k->parsed())
      return prec == "f32"
                 ? run_bench_kernel<float>(common, bench, workers_list)
                 : run_bench_kernel<double>(common, bench, workers_list);
    if (bench_m->parsed())
      return prec == "f32"
                 ? run_bench_model<float>(common, bench, arch, workers_list,
                                          model_hidden, model_input, model_bt)
                 : run_bench_model<double>(common, bench, arch, workers_list,
                                           model_hidden, model_input,
                                           model_bt);
    if (train->parsed()) {
      tcfg.time_data_gen = !no_time_data_gen;
      return prec == "f32" ? run_train<float>(common, tcfg, million_steps,
                                              checkpoint_path, serial_scan)
                           : run_train<double>(common, tcfg, million_steps,
                                               checkpoint_path, serial_scan);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
