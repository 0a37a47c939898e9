#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "sake/checkpoint.hpp"
#include "sake/train.hpp"
#include "sake/verify.hpp"

namespace {

int cmd_gen_data(const std::string& out, sake::DatasetConfig cfg) {
  sake::TrajectoryDataset ds = sake::generate_dataset(cfg);
  sake::write_dataset(out, ds);
  std::cout << "wrote " << out << " train=" << ds.train.size() << " valid=" << ds.valid.size()
            << " test=" << ds.test.size() << " resampled=" << ds.resampled << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& task_override,
              const std::string& out_override) {
  sake::TrainConfig cfg = sake::parse_config_file(config_path);
  if (!task_override.empty()) cfg.task = task_override;
  if (!out_override.empty()) cfg.checkpoint = out_override;

  std::ofstream log_file(cfg.checkpoint + ".log");
  sake::LogSink sink = [&](const std::string& line) {
    std::cout << line << "\n";
    log_file << line << "\n";
  };

  if (cfg.task == "forecast") {
    sake::ForecastMetrics m = sake::train_forecast(cfg, sink);
    std::cout << "best_valid_mse=" << m.best_valid_mse << " final_test_mse=" << m.final_test_mse
              << "\n";
    return 0;
  }
  if (cfg.task == "flow") {
    sake::FlowMetrics m = sake::train_flow(cfg, sink);
    std::cout << "initial_valid_nll=" << m.initial_valid_nll
              << " best_valid_nll=" << m.best_valid_nll
              << " final_valid_nll=" << m.final_valid_nll << "\n";
    return 0;
  }
  std::cerr << "train: unsupported task '" << cfg.task << "' (use forecast or flow)\n";
  return 2;
}

int cmd_eval(const std::string& ckpt, const std::string& data, int64_t batch_size) {
  sake::LoadedCheckpoint raw = sake::load_checkpoint(ckpt);
  if (raw.meta_value("kind") != "sake") {
    std::cerr << "eval supports sake model checkpoints\n";
    return 2;
  }
  sake::SakeModelParams model = sake::load_model(ckpt);
  sake::TrajectoryDataset ds = sake::read_dataset(data);
  std::cout << "valid_mse=" << sake::evaluate_forecast_mse(model, ds.valid, batch_size) << "\n";
  std::cout << "test_mse=" << sake::evaluate_forecast_mse(model, ds.test, batch_size) << "\n";
  return 0;
}

int cmd_verify(const std::string& suite, int64_t seeds, uint64_t seed) {
  sake::VerifyOptions opt;
  opt.suite = suite;
  opt.equivariance_seeds = seeds;
  opt.seed = seed;
  std::vector<sake::PropertyResult> results = sake::run_verify(opt);
  std::cout << sake::format_report(results);
  for (const sake::PropertyResult& r : results) {
    if (!r.pass) {
      std::cerr << "suite " << r.suite << " failed; replay with seed " << r.seed << "\n";
      return 1;
    }
  }
  return 0;
}

int cmd_bench() {
  sake::BenchReport report = sake::run_bench();
  std::cout << sake::format_bench(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAKE: spatial attention kinetic networks"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a charged n-body trajectory dataset");
  std::string gen_out;
  sake::DatasetConfig dcfg;
  gen->add_option("--out", gen_out, "output path")->required();
  gen->add_option("--seed", dcfg.seed, "generation seed");
  gen->add_option("--n-train", dcfg.n_train, "train records");
  gen->add_option("--n-valid", dcfg.n_valid, "validation records");
  gen->add_option("--n-test", dcfg.n_test, "test records");
  gen->add_option("--particles", dcfg.particles, "particles per system");
  gen->add_option("--dim", dcfg.dim, "spatial dimension");
  gen->add_option("--steps", dcfg.steps, "integrator steps per record");
  gen->add_option("--dt", dcfg.dt, "integrator time step");

  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config, train_task, train_out;
  train->add_option("--config", train_config, "flat key = value config")->required();
  train->add_option("--task", train_task, "forecast or flow (overrides config)");
  train->add_option("--out", train_out, "checkpoint path (overrides config)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data;
  int64_t eval_batch = 100;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "dataset path")->required();
  eval->add_option("--batch-size", eval_batch, "evaluation batch size");

  auto* verify = app.add_subcommand("verify", "run the property suites");
  std::string verify_suite;
  int64_t verify_seeds = 200;
  uint64_t verify_seed = 2666;
  verify->add_option("--suite", verify_suite, "run a single suite");
  verify->add_option("--seeds", verify_seeds, "equivariance seeds per dimension");
  verify->add_option("--seed", verify_seed, "base seed");

  app.add_subcommand("bench", "forward-pass scaling and stage breakdown");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_out, dcfg);
    if (train->parsed()) return cmd_train(train_config, train_task, train_out);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_batch);
    if (verify->parsed()) return cmd_verify(verify_suite, verify_seeds, verify_seed);
    return cmd_bench();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
