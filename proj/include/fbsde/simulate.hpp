#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fbsde/problems.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/tensor.hpp"

namespace fbsde::sim {

// Uniform partition of [0, T].
struct TimeGrid {
  int n_steps = 0;
  double horizon = 0.0;

  TimeGrid() = default;
  TimeGrid(int n, double t);
  double dt() const { return horizon / n_steps; }
  double t(int n) const { return horizon * n / n_steps; }
};

// Brownian increments for m paths on a grid, stored station-major so each
// station is a contiguous [m x d] block.
struct IncrementBatch {
  int m = 0;
  int n_steps = 0;
  int dim = 0;
  double dt = 0.0;
  std::vector<double> data;  // [n_steps][m][dim]

  const double* station(int n) const {
    return data.data() + (std::size_t)n * m * dim;
  }
  double* station(int n) { return data.data() + (std::size_t)n * m * dim; }
  double at(int path, int n, int c) const {
    return station(n)[(std::size_t)path * dim + c];
  }
  // Station n as an [m x d] tensor view copy.
  ad::Tensor station_tensor(int n) const;
};

// i.i.d. N(0, dt) entries, addressed by (path, station, coordinate) so the
// result does not depend on batch layout or worker count.
IncrementBatch sample_increments(int m, const TimeGrid& grid, int d,
                                 const RngStream& stream);

// Increments on a coarse grid obtained by summing fine-grid increments in
// blocks of fine_factor, so runs at N and fine_factor*N consume the same
// Brownian paths.
IncrementBatch sample_increments_coarse(int m, const TimeGrid& coarse_grid,
                                        int d, const RngStream& stream,
                                        int fine_factor);

// One forward Euler-Maruyama step: X + mu dt + sigma dW.
// Throws NumericError (with the path index) on non-finite output.
void euler_x_step(const problems::ProblemDefinition& problem, double t,
                  std::span<const double> x, double y,
                  std::span<const double> z, std::span<const double> dw,
                  double dt, std::span<double> x_next, long path_index = -1);

// One backward-value step: Y + phi dt + z^T sigma dW.
double euler_y_step(const problems::ProblemDefinition& problem, double t,
                    std::span<const double> x, double y,
                    std::span<const double> z, std::span<const double> dw,
                    double dt, long path_index = -1);

// Simulated trajectories with per-station values. dW rows pair with the
// step leaving each station.
struct PathBatch {
  int m = 0;
  int n_steps = 0;
  int dim = 0;
  TimeGrid grid;
  std::vector<double> dw;  // [m][n_steps][dim]
  std::vector<double> x;   // [m][n_steps+1][dim]
  std::vector<double> y;   // [m][n_steps+1]
  std::vector<double> z;   // [m][n_steps+1][dim]

  double* x_at(int path, int n) {
    return x.data() + ((std::size_t)path * (n_steps + 1) + n) * dim;
  }
  const double* x_at(int path, int n) const {
    return x.data() + ((std::size_t)path * (n_steps + 1) + n) * dim;
  }
  double* z_at(int path, int n) {
    return z.data() + ((std::size_t)path * (n_steps + 1) + n) * dim;
  }
  const double* z_at(int path, int n) const {
    return z.data() + ((std::size_t)path * (n_steps + 1) + n) * dim;
  }
  double& y_at(int path, int n) {
    return y[(std::size_t)path * (n_steps + 1) + n];
  }
  double y_at(int path, int n) const {
    return y[(std::size_t)path * (n_steps + 1) + n];
  }
  double* dw_at(int path, int n) {
    return dw.data() + ((std::size_t)path * n_steps + n) * dim;
  }
};

// Forward trajectories of a decoupled problem, all starting from
// problem.x0 (or per-path starts when `starts` is non-empty, one row per
// path). Throws ConfigError when called on a coupled problem.
PathBatch simulate_forward_only(const problems::ProblemDefinition& problem,
                                const TimeGrid& grid, int m,
                                const RngStream& stream,
                                const std::vector<double>& starts = {});

// Streaming forward simulation: visit(n, t_n, X) with X as an [m x d]
// tensor, station by station, without retaining whole trajectories.
void for_each_station(
    const problems::ProblemDefinition& problem, const TimeGrid& grid, int m,
    const RngStream& stream, const std::vector<double>& starts,
    const std::function<void(int n, double t, const ad::Tensor& x)>& visit);

// CSV dump with header path_id,n,t,X_1..X_d,Y,Z_1..Z_d.
void dump_paths_csv(std::ostream& os, const PathBatch& batch);

}  // namespace fbsde::sim
