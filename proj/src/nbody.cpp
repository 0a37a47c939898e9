#include "sake/nbody.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sake/tensor.hpp"

namespace sake {

std::vector<double> coulomb_forces(const NBodySystem& sys) {
  const int64_t n = sys.size();
  const int64_t d = sys.dim;
  const double eps2 = sys.softening * sys.softening;
  std::vector<double> forces(n * d, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = i + 1; j < n; ++j) {
      double r2 = eps2;
      for (int64_t k = 0; k < d; ++k) {
        const double dx = sys.positions[i * d + k] - sys.positions[j * d + k];
        r2 += dx * dx;
      }
      const double scale = sys.charges[i] * sys.charges[j] / (r2 * std::sqrt(r2));
      for (int64_t k = 0; k < d; ++k) {
        const double f = scale * (sys.positions[i * d + k] - sys.positions[j * d + k]);
        forces[i * d + k] += f;
        forces[j * d + k] -= f;
      }
    }
  }
  return forces;
}

double total_energy(const NBodySystem& sys) {
  const int64_t n = sys.size();
  const int64_t d = sys.dim;
  const double eps2 = sys.softening * sys.softening;
  double kinetic = 0.0;
  for (double v : sys.velocities) kinetic += 0.5 * v * v;
  double potential = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = i + 1; j < n; ++j) {
      double r2 = eps2;
      for (int64_t k = 0; k < d; ++k) {
        const double dx = sys.positions[i * d + k] - sys.positions[j * d + k];
        r2 += dx * dx;
      }
      potential += sys.charges[i] * sys.charges[j] / std::sqrt(r2);
    }
  }
  return kinetic + potential;
}

NBodySystem leapfrog_step(const NBodySystem& sys, double dt) {
  if (dt == 0.0) throw std::invalid_argument("leapfrog_step: dt must be nonzero");
  NBodySystem out = sys;
  const int64_t total = sys.size() * sys.dim;
  std::vector<double> f = coulomb_forces(out);
  for (int64_t i = 0; i < total; ++i) out.velocities[i] += 0.5 * dt * f[i];
  for (int64_t i = 0; i < total; ++i) out.positions[i] += dt * out.velocities[i];
  f = coulomb_forces(out);
  for (int64_t i = 0; i < total; ++i) out.velocities[i] += 0.5 * dt * f[i];
  for (double v : out.positions) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("leapfrog_step: non-finite position (dt=" + std::to_string(dt) +
                               ")");
    }
  }
  return out;
}

TrajectoryRecord simulate_record(const std::vector<double>& charges, const std::vector<double>& x0,
                                 const std::vector<double>& v0, int64_t dim, int64_t steps,
                                 double dt, double softening) {
  NBodySystem sys;
  sys.charges = charges;
  sys.positions = x0;
  sys.velocities = v0;
  sys.dim = dim;
  sys.softening = softening;
  for (int64_t s = 0; s < steps; ++s) sys = leapfrog_step(sys, dt);
  TrajectoryRecord rec;
  rec.charges = charges;
  rec.x0 = x0;
  rec.v0 = v0;
  rec.x1 = sys.positions;
  return rec;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t index, uint64_t attempt) {
  // splitmix64 over the packed identifiers
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1) + 0xbf58476d1ce4e5b9ULL * attempt;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrajectoryRecord generate_record(const DatasetConfig& cfg, uint64_t index, int64_t* resampled) {
  for (uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng(mix_seed(cfg.seed, index, attempt));
    std::vector<double> charges(cfg.particles);
    for (auto& q : charges) q = (rng() & 1) ? 1.0 : -1.0;
    std::vector<double> x0(cfg.particles * cfg.dim), v0(cfg.particles * cfg.dim);
    for (auto& v : x0) v = 0.5 * normal_sample(rng);
    for (auto& v : v0) v = 0.5 * normal_sample(rng);
    try {
      return simulate_record(charges, x0, v0, cfg.dim, cfg.steps, cfg.dt, cfg.softening);
    } catch (const std::runtime_error&) {
      ++*resampled;
    }
  }
}

}  // namespace

TrajectoryDataset generate_dataset(const DatasetConfig& config) {
  if (config.n_train <= 0 || config.n_valid <= 0 || config.n_test <= 0) {
    throw std::invalid_argument("generate_dataset: split sizes must be positive");
  }
  if (config.particles < 2) throw std::invalid_argument("generate_dataset: need >= 2 particles");
  TrajectoryDataset ds;
  ds.config = config;
  uint64_t index = 0;
  for (int64_t i = 0; i < config.n_train; ++i) {
    ds.train.push_back(generate_record(config, index++, &ds.resampled));
  }
  for (int64_t i = 0; i < config.n_valid; ++i) {
    ds.valid.push_back(generate_record(config, index++, &ds.resampled));
  }
  for (int64_t i = 0; i < config.n_test; ++i) {
    ds.test.push_back(generate_record(config, index++, &ds.resampled));
  }
  return ds;
}

namespace {

void write_rows(std::ostream& os, const std::vector<double>& data, int64_t rows, int64_t cols) {
  char buf[64];
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data[r * cols + c]);
      os << (c ? " " : "") << buf;
    }
    os << "\n";
  }
}

void write_split(std::ostream& os, const std::string& name,
                 const std::vector<TrajectoryRecord>& recs, const DatasetConfig& cfg) {
  os << "#SPLIT " << name << " " << recs.size() << "\n";
  for (const TrajectoryRecord& rec : recs) {
    for (std::size_t i = 0; i < rec.charges.size(); ++i) {
      os << (i ? " " : "") << static_cast<int>(rec.charges[i]);
    }
    os << "\n";
    write_rows(os, rec.x0, cfg.particles, cfg.dim);
    write_rows(os, rec.v0, cfg.particles, cfg.dim);
    write_rows(os, rec.x1, cfg.particles, cfg.dim);
  }
}

std::vector<double> read_rows(std::istream& is, int64_t rows, int64_t cols, const char* what) {
  std::vector<double> out(rows * cols);
  std::string line;
  for (int64_t r = 0; r < rows; ++r) {
    if (!std::getline(is, line)) throw std::runtime_error(std::string("dataset: truncated ") + what);
    std::istringstream ls(line);
    for (int64_t c = 0; c < cols; ++c) {
      if (!(ls >> out[r * cols + c])) {
        throw std::runtime_error(std::string("dataset: malformed ") + what + " row: " + line);
      }
    }
  }
  return out;
}

void read_split(std::istream& is, const std::string& expect_name,
                std::vector<TrajectoryRecord>& out, const DatasetConfig& cfg) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset: missing split header");
  std::istringstream ls(line);
  std::string tag, name;
  int64_t count = 0;
  ls >> tag >> name >> count;
  if (tag != "#SPLIT" || name != expect_name || count < 0) {
    throw std::runtime_error("dataset: bad split header: " + line);
  }
  out.reserve(count);
  for (int64_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("dataset: truncated charges");
    TrajectoryRecord rec;
    std::istringstream cs(line);
    double q;
    while (cs >> q) rec.charges.push_back(q);
    if (static_cast<int64_t>(rec.charges.size()) != cfg.particles) {
      throw std::runtime_error("dataset: charge count mismatch: " + line);
    }
    rec.x0 = read_rows(is, cfg.particles, cfg.dim, "x0");
    rec.v0 = read_rows(is, cfg.particles, cfg.dim, "v0");
    rec.x1 = read_rows(is, cfg.particles, cfg.dim, "x1");
    out.push_back(std::move(rec));
  }
}

}  // namespace

void write_dataset(const std::string& path, const TrajectoryDataset& ds) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open dataset for writing: " + path);
  char head[256];
  std::snprintf(head, sizeof head, "SAKE-NBODY v1 N=%lld n=%lld dt=%.17g steps=%lld seed=%llu",
                static_cast<long long>(ds.config.particles), static_cast<long long>(ds.config.dim),
                ds.config.dt, static_cast<long long>(ds.config.steps),
                static_cast<unsigned long long>(ds.config.seed));
  os << head << "\n";
  write_split(os, "train", ds.train, ds.config);
  write_split(os, "valid", ds.valid, ds.config);
  write_split(os, "test", ds.test, ds.config);
  if (!os) throw std::runtime_error("dataset write failed: " + path);
}

TrajectoryDataset read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset: empty file");
  TrajectoryDataset ds;
  {
    std::istringstream hs(line);
    std::string magic, version, kv;
    hs >> magic >> version;
    if (magic != "SAKE-NBODY" || version != "v1") {
      throw std::runtime_error("not a SAKE-NBODY v1 file: " + path);
    }
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::runtime_error("dataset: malformed header: " + kv);
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "N") ds.config.particles = std::stoll(val);
      else if (key == "n") ds.config.dim = std::stoll(val);
      else if (key == "dt") ds.config.dt = std::stod(val);
      else if (key == "steps") ds.config.steps = std::stoll(val);
      else if (key == "seed") ds.config.seed = std::stoull(val);
      else throw std::runtime_error("dataset: unknown header key: " + key);
    }
  }
  read_split(is, "train", ds.train, ds.config);
  read_split(is, "valid", ds.valid, ds.config);
  read_split(is, "test", ds.test, ds.config);
  ds.config.n_train = static_cast<int64_t>(ds.train.size());
  ds.config.n_valid = static_cast<int64_t>(ds.valid.size());
  ds.config.n_test = static_cast<int64_t>(ds.test.size());
  return ds;
}

}  // namespace sake
