#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sake/flow.hpp"
#include "sake/model.hpp"
#include "sake/nbody.hpp"

namespace sake {

struct TrainConfig {
  std::string task = "forecast";  // forecast | flow | verify | bench
  int64_t depth = 4;
  int64_t width = 32;
  int64_t n_lambda = 0;  // 0: matches width
  int64_t heads = 4;
  double lr = 5e-4;
  int64_t epochs = 1000;
  int64_t batch_size = 100;
  double l2 = 1e-12;
  std::string schedule = "cosine-warmup";  // constant | cosine-warmup
  uint64_t seed = 2666;
  std::string dataset;
  std::string checkpoint = "model.ckpt";
};

/// Flat `key = value` text; keys match the field names exactly. '#' starts a
/// comment. Unknown keys are rejected.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

/// Per-parameter first/second moment buffers for bias-corrected Adam.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  int64_t skipped = 0;
  std::vector<std::vector<double>> m, v;

  explicit AdamState(const std::vector<std::pair<std::string, Tensor>>& params);
};

/// Applies one update in place, reading gradients from the parameter grad
/// buffers; L2 enters as an additive lambda*w gradient term. A non-finite
/// gradient anywhere skips the whole step and bumps the skip counter.
/// Gradients are cleared afterwards either way.
void adam_step(AdamState& state, std::vector<std::pair<std::string, Tensor>>& params, double lr,
               double l2);

/// Linear ramp 1e-6 -> peak over the first 10% of epochs, cosine decay back
/// to 1e-6 over the rest.
double lr_schedule(int64_t epoch, int64_t total_epochs, double peak);

using LogSink = std::function<void(const std::string&)>;

struct ForecastMetrics {
  double final_test_mse = 0;
  double best_valid_mse = 0;
  int64_t skipped_steps = 0;
  int64_t epochs_run = 0;
};

/// Disjoint-union batching of records into one graph; attributes are the
/// charges, initial velocities drive the kinetics.
ForecastMetrics train_forecast(const TrainConfig& config, const LogSink& log = {});

/// Mean squared error of forecast_positions against x1 over records.
double evaluate_forecast_mse(const SakeModelParams& model,
                             const std::vector<TrajectoryRecord>& records, int64_t batch_size);

struct FlowMetrics {
  double initial_valid_nll = 0;
  double best_valid_nll = 0;
  double final_valid_nll = 0;
  int64_t lr_retries = 0;
  int64_t epochs_run = 0;
};

/// Maximum-likelihood training of the coupling stack on a centered
/// scale-mixture target (or samples loaded from `dataset` when set).
FlowMetrics train_flow(const TrainConfig& config, const LogSink& log = {});

/// Deterministic held-out NLL with n_draws auxiliary samples per point.
double flow_dataset_nll(const FlowStack& flow, const std::vector<Tensor>& xs, int64_t n_draws,
                        uint64_t seed);

/// The synthetic flow-training target (N=4, n=2 samples).
std::vector<Tensor> flow_target_samples(int64_t count, uint64_t seed);

}  // namespace sake
