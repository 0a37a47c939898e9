#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sake {

/// Charged particles with softened pairwise Coulomb interactions. Plain
/// buffers; the simulator never touches the autodiff tape.
struct NBodySystem {
  std::vector<double> charges;    // +/-1 per particle
  std::vector<double> positions;  // N x n row-major
  std::vector<double> velocities;
  int64_t dim = 3;
  double softening = 0.1;

  int64_t size() const { return static_cast<int64_t>(charges.size()); }
};

/// F_i = sum_j qi qj (x_i - x_j) / (|x_i - x_j|^2 + eps^2)^(3/2)
std::vector<double> coulomb_forces(const NBodySystem& sys);

/// Potential + kinetic energy of the softened system.
double total_energy(const NBodySystem& sys);

/// Kick-drift-kick velocity-Verlet step; aborts on non-finite state.
NBodySystem leapfrog_step(const NBodySystem& sys, double dt);

struct TrajectoryRecord {
  std::vector<double> charges;
  std::vector<double> x0, v0, x1;
};

struct DatasetConfig {
  int64_t n_train = 3000;
  int64_t n_valid = 2000;
  int64_t n_test = 2000;
  int64_t particles = 5;
  int64_t dim = 3;
  int64_t steps = 1000;
  double dt = 1e-3;
  double softening = 0.1;
  uint64_t seed = 2666;
};

struct TrajectoryDataset {
  DatasetConfig config;
  std::vector<TrajectoryRecord> train, valid, test;
  int64_t resampled = 0;  // records regenerated after a non-finite trajectory
};

/// Charges +/-1 uniform, x and v from Gaussians scaled by 0.5, integrated
/// `steps` velocity-Verlet steps. Deterministic per (seed, record index);
/// non-finite trajectories are resampled with an incremented sub-seed.
TrajectoryDataset generate_dataset(const DatasetConfig& config);

/// Integrates a single record's initial conditions; used by equivariance
/// checks on the physics itself.
TrajectoryRecord simulate_record(const std::vector<double>& charges, const std::vector<double>& x0,
                                 const std::vector<double>& v0, int64_t dim, int64_t steps,
                                 double dt, double softening);

void write_dataset(const std::string& path, const TrajectoryDataset& ds);
TrajectoryDataset read_dataset(const std::string& path);

}  // namespace sake
