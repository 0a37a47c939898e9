#include "sake/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sake/checkpoint.hpp"

namespace sake {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void emit(const LogSink& log, const std::string& line) {
  if (log) log(line);
}

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "task") cfg.task = val;
      else if (key == "depth") cfg.depth = std::stoll(val);
      else if (key == "width") cfg.width = std::stoll(val);
      else if (key == "n_lambda") cfg.n_lambda = std::stoll(val);
      else if (key == "heads") cfg.heads = std::stoll(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "epochs") cfg.epochs = std::stoll(val);
      else if (key == "batch_size") cfg.batch_size = std::stoll(val);
      else if (key == "l2") cfg.l2 = std::stod(val);
      else if (key == "schedule") cfg.schedule = val;
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "dataset") cfg.dataset = val;
      else if (key == "checkpoint") cfg.checkpoint = val;
      else throw std::invalid_argument("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  if (cfg.depth < 0 || cfg.width < 1 || cfg.heads < 1 || cfg.epochs < 1 || cfg.batch_size < 1 ||
      cfg.lr <= 0) {
    throw std::invalid_argument("config: counts must be positive and lr > 0");
  }
  if (cfg.schedule != "constant" && cfg.schedule != "cosine-warmup") {
    throw std::invalid_argument("config: schedule must be constant or cosine-warmup");
  }
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

AdamState::AdamState(const std::vector<std::pair<std::string, Tensor>>& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& [name, t] : params) {
    m.emplace_back(t.numel(), 0.0);
    v.emplace_back(t.numel(), 0.0);
  }
}

void adam_step(AdamState& state, std::vector<std::pair<std::string, Tensor>>& params, double lr,
               double l2) {
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameter list");
  }
  bool finite = true;
  for (auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        finite = false;
        break;
      }
    }
    if (!finite) break;
  }
  if (!finite) {
    ++state.skipped;
    for (auto& [name, t] : params) t.zero_grad();
    return;
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p].second;
    auto& w = t.value();
    auto& gbuf = t.grad();  // zeros if never touched
    auto& mp = state.m[p];
    auto& vp = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = gbuf[i] + l2 * w[i];
      mp[i] = state.beta1 * mp[i] + (1.0 - state.beta1) * g;
      vp[i] = state.beta2 * vp[i] + (1.0 - state.beta2) * g * g;
      const double mhat = mp[i] / bc1;
      const double vhat = vp[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    t.zero_grad();
  }
}

double lr_schedule(int64_t epoch, int64_t total_epochs, double peak) {
  if (total_epochs <= 0 || epoch < 0 || epoch >= total_epochs) {
    throw std::invalid_argument("lr_schedule: epoch out of range");
  }
  const double floor_lr = 1e-6;
  const int64_t warm = std::max<int64_t>(1, total_epochs / 10);
  if (epoch <= warm) {
    return floor_lr + (peak - floor_lr) * static_cast<double>(epoch) / static_cast<double>(warm);
  }
  const double t =
      static_cast<double>(epoch - warm) / static_cast<double>(total_epochs - 1 - warm);
  return floor_lr + (peak - floor_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
}

// ---------------------------------------------------------------------------
// forecast task

namespace {

struct ForecastBatch {
  Tensor x, v, attr, target;
  EdgeList edges;
};

ForecastBatch assemble_batch(const std::vector<TrajectoryRecord>& records,
                             const std::vector<int64_t>& idx, int64_t lo, int64_t hi,
                             int64_t particles, int64_t dim) {
  const int64_t count = hi - lo;
  const int64_t n_nodes = count * particles;
  ForecastBatch b;
  b.x = Tensor(Shape{n_nodes, dim});
  b.v = Tensor(Shape{n_nodes, dim});
  b.target = Tensor(Shape{n_nodes, dim});
  b.attr = Tensor(Shape{n_nodes, 1});
  b.edges.reserve(count * particles * (particles - 1));
  for (int64_t r = 0; r < count; ++r) {
    const TrajectoryRecord& rec = records[idx[lo + r]];
    const int64_t base = r * particles;
    std::copy(rec.x0.begin(), rec.x0.end(), b.x.value().begin() + base * dim);
    std::copy(rec.v0.begin(), rec.v0.end(), b.v.value().begin() + base * dim);
    std::copy(rec.x1.begin(), rec.x1.end(), b.target.value().begin() + base * dim);
    for (int64_t p = 0; p < particles; ++p) b.attr.value()[base + p] = rec.charges[p];
    for (int32_t u = 0; u < particles; ++u) {
      for (int32_t w = 0; w < particles; ++w) {
        if (u != w) {
          b.edges.emplace_back(static_cast<int32_t>(base) + u, static_cast<int32_t>(base) + w);
        }
      }
    }
  }
  return b;
}

SakeConfig forecast_model_config(const TrainConfig& cfg, int64_t dim) {
  SakeConfig mc;
  mc.depth = cfg.depth;
  mc.width = cfg.width;
  mc.n_lambda = cfg.n_lambda;
  mc.heads = cfg.heads;
  mc.n_rbf = 50;
  mc.d_max = 5.0;
  mc.cutoff = 0.0;  // fully connected for the n-body benchmark
  mc.attr_dim = 1;
  mc.dim = dim;
  mc.seed = cfg.seed;
  return mc;
}

}  // namespace

double evaluate_forecast_mse(const SakeModelParams& model,
                             const std::vector<TrajectoryRecord>& records, int64_t batch_size) {
  if (records.empty()) throw std::invalid_argument("evaluate_forecast_mse: no records");
  const int64_t particles = static_cast<int64_t>(records[0].charges.size());
  const int64_t dim = model.config.dim;
  std::vector<int64_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  double sq_sum = 0;
  int64_t count = 0;
  for (int64_t lo = 0; lo < static_cast<int64_t>(records.size()); lo += batch_size) {
    const int64_t hi = std::min<int64_t>(records.size(), lo + batch_size);
    ForecastBatch b = assemble_batch(records, idx, lo, hi, particles, dim);
    GraphState state{{}, b.x, b.v, b.attr, b.edges};
    Tensor pred = forecast_positions(model, state);
    for (int64_t i = 0; i < pred.numel(); ++i) {
      const double d = pred.value()[i] - b.target.value()[i];
      sq_sum += d * d;
      ++count;
    }
  }
  return sq_sum / static_cast<double>(count);
}

ForecastMetrics train_forecast(const TrainConfig& config, const LogSink& log) {
  if (config.dataset.empty()) throw std::invalid_argument("train_forecast: dataset path not set");
  TrajectoryDataset ds = read_dataset(config.dataset);
  const int64_t particles = ds.config.particles;
  const int64_t dim = ds.config.dim;

  SakeModelParams model = make_sake_model(forecast_model_config(config, dim));
  auto params = named_parameters(model);
  AdamState adam(params);

  ForecastMetrics metrics;
  metrics.best_valid_mse = std::numeric_limits<double>::infinity();

  std::vector<int64_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr =
        config.schedule == "constant" ? config.lr : lr_schedule(epoch, config.epochs, config.lr);
    {
      std::mt19937_64 shuffle_rng(mix(config.seed, static_cast<uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    double train_sq = 0;
    int64_t train_batches = 0;
    for (int64_t lo = 0; lo < static_cast<int64_t>(order.size()); lo += config.batch_size) {
      const int64_t hi = std::min<int64_t>(order.size(), lo + config.batch_size);
      ForecastBatch b = assemble_batch(ds.train, order, lo, hi, particles, dim);
      Tape tape;
      Tape::Scope scope(tape);
      GraphState state{{}, b.x, b.v, b.attr, b.edges};
      Tensor pred = forecast_positions(model, state);
      Tensor loss = mean_all(square(sub(pred, b.target)));
      train_sq += loss.item();
      ++train_batches;
      tape.backward(loss);
      adam_step(adam, params, lr, config.l2);
    }
    const double train_mse = train_sq / static_cast<double>(train_batches);
    const double valid_mse = evaluate_forecast_mse(model, ds.valid, config.batch_size);
    {
      char line[160];
      std::snprintf(line, sizeof line, "epoch=%lld lr=%.8g train_mse=%.8g valid_mse=%.8g",
                    static_cast<long long>(epoch), lr, train_mse, valid_mse);
      emit(log, line);
    }
    if (valid_mse < metrics.best_valid_mse) {
      metrics.best_valid_mse = valid_mse;
      save_model(config.checkpoint, model);
    }
    ++metrics.epochs_run;
  }
  metrics.skipped_steps = adam.skipped;
  if (adam.skipped > 0) {
    emit(log, "skipped_steps=" + std::to_string(adam.skipped));
  }

  SakeModelParams best = load_model(config.checkpoint);
  metrics.final_test_mse = evaluate_forecast_mse(best, ds.test, config.batch_size);
  emit(log, "final test_mse=" + std::to_string(metrics.final_test_mse));
  return metrics;
}

// ---------------------------------------------------------------------------
// flow task

std::vector<Tensor> flow_target_samples(int64_t count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> out;
  out.reserve(count);
  for (int64_t i = 0; i < count; ++i) out.push_back(sample_scale_mixture(4, 2, rng));
  return out;
}

double flow_dataset_nll(const FlowStack& flow, const std::vector<Tensor>& xs, int64_t n_draws,
                        uint64_t seed) {
  double total = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double lp = 0;
    for (int64_t d = 0; d < n_draws; ++d) {
      lp += flow_logprob(flow, xs[i], mix(seed, i * 1000 + static_cast<uint64_t>(d)));
    }
    total += lp / static_cast<double>(n_draws);
  }
  return -total / static_cast<double>(xs.size());
}

namespace {

std::vector<Tensor> load_flow_samples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open flow samples: " + path);
  int64_t count = 0, n_nodes = 0, dim = 0;
  if (!(is >> count >> n_nodes >> dim)) throw std::runtime_error("flow samples: bad header");
  std::vector<Tensor> out;
  out.reserve(count);
  for (int64_t i = 0; i < count; ++i) {
    Tensor t(Shape{n_nodes, dim});
    for (auto& v : t.value()) {
      if (!(is >> v)) throw std::runtime_error("flow samples: truncated");
    }
    out.push_back(project_center(t));
  }
  return out;
}

}  // namespace

FlowMetrics train_flow(const TrainConfig& config, const LogSink& log) {
  std::vector<Tensor> train_xs, valid_xs;
  if (config.dataset.empty()) {
    train_xs = flow_target_samples(512, mix(config.seed, 1));
    valid_xs = flow_target_samples(256, mix(config.seed, 2));
  } else {
    std::vector<Tensor> all = load_flow_samples(config.dataset);
    if (all.size() < 4) throw std::runtime_error("flow samples: need at least 4");
    const std::size_t split = all.size() * 3 / 4;
    train_xs.assign(all.begin(), all.begin() + split);
    valid_xs.assign(all.begin() + split, all.end());
  }

  FlowConfig fc;
  fc.couplings = config.depth;
  fc.dim = train_xs[0].extent(1);
  fc.width = config.width;
  fc.sake_depth = 1;
  fc.heads = config.heads;
  fc.n_rbf = 20;
  fc.seed = config.seed;
  FlowStack flow = make_flow(fc);
  auto params = named_parameters(flow);
  AdamState adam(params);

  FlowMetrics metrics;
  metrics.initial_valid_nll = flow_dataset_nll(flow, valid_xs, 1, mix(config.seed, 3));
  metrics.best_valid_nll = metrics.initial_valid_nll;
  emit(log, "initial valid_nll=" + std::to_string(metrics.initial_valid_nll));
  save_flow(config.checkpoint, flow);

  std::vector<int64_t> order(train_xs.size());
  std::iota(order.begin(), order.end(), 0);
  double lr_scale = 1.0;

  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double base_lr = config.schedule == "constant"
                               ? config.lr
                               : lr_schedule(epoch, config.epochs, config.lr);
    // snapshot for the retry path
    std::vector<std::vector<double>> snapshot;
    snapshot.reserve(params.size());
    for (auto& [name, t] : params) snapshot.push_back(t.value());
    const AdamState adam_snapshot = adam;

    int retries = 0;
    for (;;) {
      try {
        std::mt19937_64 shuffle_rng(mix(config.seed, 100 + static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double train_nll_sum = 0;
        int64_t n_batches = 0;
        for (int64_t lo = 0; lo < static_cast<int64_t>(order.size()); lo += config.batch_size) {
          const int64_t hi = std::min<int64_t>(order.size(), lo + config.batch_size);
          Tape tape;
          Tape::Scope scope(tape);
          Tensor total = Tensor::scalar(0.0);
          std::mt19937_64 aux_rng(
              mix(config.seed, 5000 + static_cast<uint64_t>(epoch) * 1000 + lo));
          for (int64_t i = lo; i < hi; ++i) {
            const Tensor& x = train_xs[order[i]];
            Tensor aux = sample_centered_gaussian(x.extent(0), x.extent(1), aux_rng);
            total = add(total, flow_logprob_with_aux(flow, x, aux));
          }
          Tensor loss = mul_scalar(total, -1.0 / static_cast<double>(hi - lo));
          train_nll_sum += loss.item();
          ++n_batches;
          tape.backward(loss);
          adam_step(adam, params, base_lr * lr_scale, config.l2);
        }
        const double valid_nll = flow_dataset_nll(flow, valid_xs, 1, mix(config.seed, 3));
        {
          char line[160];
          std::snprintf(line, sizeof line, "epoch=%lld lr=%.8g train_nll=%.8g valid_nll=%.8g",
                        static_cast<long long>(epoch), base_lr * lr_scale,
                        train_nll_sum / static_cast<double>(n_batches), valid_nll);
          emit(log, line);
        }
        if (valid_nll < metrics.best_valid_nll) {
          metrics.best_valid_nll = valid_nll;
          save_flow(config.checkpoint, flow);
        }
        metrics.final_valid_nll = valid_nll;
        break;
      } catch (const ScaleRangeError& err) {
        if (++retries > 3) throw;
        ++metrics.lr_retries;
        lr_scale *= 0.5;
        emit(log, std::string("scale explosion (") + err.what() + "); lr halved, epoch restarted");
        for (std::size_t p = 0; p < params.size(); ++p) params[p].second.value() = snapshot[p];
        adam = adam_snapshot;
      }
    }
    ++metrics.epochs_run;
  }
  return metrics;
}

}  // namespace sake
