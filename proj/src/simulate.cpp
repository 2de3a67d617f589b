#include "fbsde/simulate.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <ostream>
#include <string>

#include "fbsde/errors.hpp"

namespace fbsde::sim {

TimeGrid::TimeGrid(int n, double t) : n_steps(n), horizon(t) {
  if (n < 1) throw ConfigError("grid: n_steps must be >= 1");
  if (!(t > 0.0)) throw ConfigError("grid: horizon must be > 0");
}

ad::Tensor IncrementBatch::station_tensor(int n) const {
  ad::Tensor out(m, dim);
  std::memcpy(out.data(), station(n), (std::size_t)m * dim * sizeof(double));
  return out;
}

IncrementBatch sample_increments(int m, const TimeGrid& grid, int d,
                                 const RngStream& stream) {
  return sample_increments_coarse(m, grid, d, stream, 1);
}

IncrementBatch sample_increments_coarse(int m, const TimeGrid& coarse_grid,
                                        int d, const RngStream& stream,
                                        int fine_factor) {
  if (m < 1 || d < 1) throw ConfigError("increments: m and d must be >= 1");
  if (coarse_grid.n_steps < 1)
    throw ConfigError("increments: grid must have n_steps >= 1");
  if (fine_factor < 1)
    throw ConfigError("increments: fine_factor must be >= 1");

  IncrementBatch out;
  out.m = m;
  out.n_steps = coarse_grid.n_steps;
  out.dim = d;
  out.dt = coarse_grid.dt();
  out.data.assign((std::size_t)out.n_steps * m * d, 0.0);

  const double fine_dt = out.dt / fine_factor;
  const double scale = std::sqrt(fine_dt);
  for (int n = 0; n < out.n_steps; ++n) {
    double* block = out.station(n);
    for (int p = 0; p < m; ++p) {
      double* row = block + (std::size_t)p * d;
      for (int f = 0; f < fine_factor; ++f) {
        const uint32_t fine_station = (uint32_t)(n * fine_factor + f);
        for (int c = 0; c < d; c += 2) {
          double z0, z1;
          stream.gaussian_pair((uint64_t)p, fine_station, (uint32_t)(c / 2),
                               z0, z1);
          row[c] += scale * z0;
          if (c + 1 < d) row[c + 1] += scale * z1;
        }
      }
    }
  }
  return out;
}

void euler_x_step(const problems::ProblemDefinition& problem, double t,
                  std::span<const double> x, double y,
                  std::span<const double> z, std::span<const double> dw,
                  double dt, std::span<double> x_next, long path_index) {
  const int d = problem.dim;
  if ((int)x.size() != d || (int)dw.size() != d || (int)x_next.size() != d)
    throw ShapeError("euler_x_step: state dimension mismatch");

  std::vector<double> mu(d), sdw(d);
  problem.mu(t, x.data(), y, z.data(), mu.data());
  problem.apply_sigma(t, x.data(), y, dw.data(), sdw.data());
  for (int i = 0; i < d; ++i) {
    x_next[i] = x[i] + mu[i] * dt + sdw[i];
    if (!std::isfinite(x_next[i]))
      throw NumericError("euler_x_step: non-finite state component " +
                             std::to_string(i),
                         -1, path_index, -1);
  }
}

double euler_y_step(const problems::ProblemDefinition& problem, double t,
                    std::span<const double> x, double y,
                    std::span<const double> z, std::span<const double> dw,
                    double dt, long path_index) {
  const int d = problem.dim;
  if ((int)x.size() != d || (int)z.size() != d || (int)dw.size() != d)
    throw ShapeError("euler_y_step: state dimension mismatch");

  std::vector<double> sdw(d);
  problem.apply_sigma(t, x.data(), y, dw.data(), sdw.data());
  double diffusion = 0.0;
  for (int i = 0; i < d; ++i) diffusion += z[i] * sdw[i];
  const double out = y + problem.phi(t, x.data(), y, z.data()) * dt + diffusion;
  if (!std::isfinite(out))
    throw NumericError("euler_y_step: non-finite value", -1, path_index, -1);
  return out;
}

namespace {

void check_decoupled(const problems::ProblemDefinition& problem,
                     const char* what) {
  if (!problem.is_decoupled)
    throw ConfigError(std::string(what) +
                      ": requires a decoupled problem (mu, sigma free of Y, Z)");
}

std::vector<double> resolve_starts(const problems::ProblemDefinition& problem,
                                   int m, const std::vector<double>& starts) {
  if (starts.empty()) {
    std::vector<double> out((std::size_t)m * problem.dim);
    for (int p = 0; p < m; ++p)
      std::memcpy(out.data() + (std::size_t)p * problem.dim, problem.x0.data(),
                  problem.dim * sizeof(double));
    return out;
  }
  if ((int)starts.size() != m * problem.dim)
    throw ShapeError("simulate: starts must be m x d");
  return starts;
}

}  // namespace

PathBatch simulate_forward_only(const problems::ProblemDefinition& problem,
                                const TimeGrid& grid, int m,
                                const RngStream& stream,
                                const std::vector<double>& starts) {
  check_decoupled(problem, "simulate_forward_only");
  const int d = problem.dim;
  const int n_steps = grid.n_steps;

  PathBatch batch;
  batch.m = m;
  batch.n_steps = n_steps;
  batch.dim = d;
  batch.grid = grid;
  batch.dw.assign((std::size_t)m * n_steps * d, 0.0);
  batch.x.assign((std::size_t)m * (n_steps + 1) * d, 0.0);
  batch.y.assign((std::size_t)m * (n_steps + 1), 0.0);
  batch.z.assign((std::size_t)m * (n_steps + 1) * d, 0.0);

  const auto x0 = resolve_starts(problem, m, starts);
  const double dt = grid.dt();
  const double scale = std::sqrt(dt);
  std::vector<double> zdummy(d, 0.0);
  for (int p = 0; p < m; ++p) {
    std::memcpy(batch.x_at(p, 0), x0.data() + (std::size_t)p * d,
                d * sizeof(double));
    for (int n = 0; n < n_steps; ++n) {
      double* dw = batch.dw_at(p, n);
      for (int c = 0; c < d; c += 2) {
        double z0, z1;
        stream.gaussian_pair((uint64_t)p, (uint32_t)n, (uint32_t)(c / 2), z0,
                             z1);
        dw[c] = scale * z0;
        if (c + 1 < d) dw[c + 1] = scale * z1;
      }
      euler_x_step(problem, grid.t(n), std::span(batch.x_at(p, n), d), 0.0,
                   zdummy, std::span(dw, d), dt,
                   std::span(batch.x_at(p, n + 1), d), p);
    }
  }
  return batch;
}

void for_each_station(
    const problems::ProblemDefinition& problem, const TimeGrid& grid, int m,
    const RngStream& stream, const std::vector<double>& starts,
    const std::function<void(int n, double t, const ad::Tensor& x)>& visit) {
  check_decoupled(problem, "for_each_station");
  const int d = problem.dim;
  const auto x0 = resolve_starts(problem, m, starts);

  ad::Tensor x(m, d);
  std::memcpy(x.data(), x0.data(), x0.size() * sizeof(double));
  visit(0, 0.0, x);

  const double dt = grid.dt();
  const double scale = std::sqrt(dt);
  std::vector<double> dw(d), zdummy(d, 0.0), next(d);
  for (int n = 0; n < grid.n_steps; ++n) {
    const double t = grid.t(n);
    for (int p = 0; p < m; ++p) {
      for (int c = 0; c < d; c += 2) {
        double z0, z1;
        stream.gaussian_pair((uint64_t)p, (uint32_t)n, (uint32_t)(c / 2), z0,
                             z1);
        dw[c] = scale * z0;
        if (c + 1 < d) dw[c + 1] = scale * z1;
      }
      euler_x_step(problem, t, std::span(x.row(p), d), 0.0, zdummy, dw, dt,
                   next, p);
      std::memcpy(x.row(p), next.data(), d * sizeof(double));
    }
    visit(n + 1, grid.t(n + 1), x);
  }
}

void dump_paths_csv(std::ostream& os, const PathBatch& batch) {
  os << "path_id,n,t";
  for (int i = 1; i <= batch.dim; ++i) os << ",X_" << i;
  os << ",Y";
  for (int i = 1; i <= batch.dim; ++i) os << ",Z_" << i;
  os << "\n";
  char buf[40];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    os << ',' << std::string_view(buf, (std::size_t)(res.ptr - buf));
  };
  for (int p = 0; p < batch.m; ++p) {
    for (int n = 0; n <= batch.n_steps; ++n) {
      os << p << ',' << n;
      put(batch.grid.t(n));
      for (int i = 0; i < batch.dim; ++i) put(batch.x_at(p, n)[i]);
      put(batch.y_at(p, n));
      for (int i = 0; i < batch.dim; ++i) put(batch.z_at(p, n)[i]);
      os << "\n";
    }
  }
}

}  // namespace fbsde::sim
