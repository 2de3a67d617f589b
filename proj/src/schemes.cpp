#include "fbsde/schemes.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "fbsde/errors.hpp"

namespace fbsde::schemes {

using ad::AdValue;
using ad::Tape;
using ad::Tensor;

const char* scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kDeepBsde:
      return "deep-bsde";
    case SchemeKind::kS1:
      return "s1";
    case SchemeKind::kS2:
      return "s2";
    case SchemeKind::kS3:
      return "s3";
  }
  return "?";
}

SchemeKind scheme_from_name(const std::string& name) {
  if (name == "deep-bsde") return SchemeKind::kDeepBsde;
  if (name == "s1") return SchemeKind::kS1;
  if (name == "s2") return SchemeKind::kS2;
  if (name == "s3") return SchemeKind::kS3;
  throw ConfigError("scheme: unknown scheme '" + name + "'");
}

void SchemeConfig::validate() const {
  if (n_steps < 1) throw ConfigError("scheme: n_steps must be >= 1");
  if (batch < 1) throw ConfigError("scheme: batch must be >= 1");
  if (beta1 < 0.0 || beta2 < 0.0)
    throw ConfigError("scheme: beta1, beta2 must be >= 0");
  if (!problem) throw ConfigError("scheme: missing problem");
  if (grid.n_steps != n_steps)
    throw ConfigError("scheme: grid does not match n_steps");
}

std::vector<std::pair<AdValue, AdValue>> UModel::eval_u_grad_many(
    Tape& tape, std::span<const double> ts,
    std::span<const Tensor* const> xs) {
  std::vector<std::pair<AdValue, AdValue>> out;
  out.reserve(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k)
    out.push_back(eval_u_grad(tape, ts[k], *xs[k]));
  return out;
}

namespace {

// Cap the stacked activation size at ~4 MB so long grids chunk instead of
// ballooning the tape.
std::size_t stack_chunk(int m, int width, std::size_t n_stations) {
  const long budget = 1L << 16;
  const long per_station = (long)m * std::max(width, 1);
  const long k = std::max(1L, budget / std::max(per_station, 1L));
  return std::min<std::size_t>((std::size_t)k, n_stations);
}

template <typename Binding>
std::vector<std::pair<AdValue, AdValue>> eval_many_stacked(
    Tape& tape, const Binding& binding, int width, std::span<const double> ts,
    std::span<const Tensor* const> xs) {
  std::vector<std::pair<AdValue, AdValue>> out;
  out.reserve(ts.size());
  const int m = xs[0]->rows();
  const std::size_t chunk = stack_chunk(m, width, ts.size());
  for (std::size_t start = 0; start < ts.size(); start += chunk) {
    const std::size_t k = std::min(chunk, ts.size() - start);
    auto [u_all, z_all] = nets::ugrad_stacked(
        tape, binding, ts.subspan(start, k), xs.subspan(start, k));
    for (std::size_t i = 0; i < k; ++i)
      out.push_back({tape.slice_rows(u_all, (int)i * m, m),
                     tape.slice_rows(z_all, (int)i * m, m)});
  }
  return out;
}

}  // namespace

std::vector<std::pair<AdValue, AdValue>> MlpUModel::eval_u_grad_many(
    Tape& tape, std::span<const double> ts,
    std::span<const Tensor* const> xs) {
  return eval_many_stacked(tape, binding_, params_->config.hidden_width, ts,
                           xs);
}

std::vector<std::pair<AdValue, AdValue>> MscaleUModel::eval_u_grad_many(
    Tape& tape, std::span<const double> ts,
    std::span<const Tensor* const> xs) {
  return eval_many_stacked(tape, binding_,
                           params_->config.subnet.hidden_width, ts, xs);
}

void MlpUModel::bind(Tape& tape, bool trainable) {
  binding_ = nets::bind_mlp(tape, *params_, trainable);
  leaves_ = trainable ? nets::binding_leaves(binding_)
                      : std::vector<AdValue>{};
}

AdValue MlpUModel::eval_u(Tape& tape, double t, const Tensor& x) {
  return nets::u_batch(tape, binding_, t, x);
}

std::pair<AdValue, AdValue> MlpUModel::eval_u_grad(Tape& tape, double t,
                                                   const Tensor& x) {
  return nets::ugrad_batch(tape, binding_, t, x);
}

std::vector<double> MlpUModel::values(double t, const Tensor& x) const {
  return nets::mlp_values(*params_, t, x);
}

void MscaleUModel::bind(Tape& tape, bool trainable) {
  binding_ = nets::bind_mscale(tape, *params_, trainable);
  leaves_ = trainable ? nets::binding_leaves(binding_)
                      : std::vector<AdValue>{};
}

AdValue MscaleUModel::eval_u(Tape& tape, double t, const Tensor& x) {
  return nets::u_batch(tape, binding_, t, x);
}

std::pair<AdValue, AdValue> MscaleUModel::eval_u_grad(Tape& tape, double t,
                                                      const Tensor& x) {
  return nets::ugrad_batch(tape, binding_, t, x);
}

std::vector<double> MscaleUModel::values(double t, const Tensor& x) const {
  return nets::mscale_values(*params_, t, x);
}

ExactUModel::ExactUModel(const problems::ProblemDefinition& problem)
    : problem_(&problem) {
  if (!problem.has_exact())
    throw ConfigError("exact model: problem has no closed-form solution");
}

AdValue ExactUModel::eval_u(Tape& tape, double t, const Tensor& x) {
  Tensor u(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) u(i, 0) = problem_->exact_u(t, x.row(i));
  return tape.constant(std::move(u));
}

std::pair<AdValue, AdValue> ExactUModel::eval_u_grad(Tape& tape, double t,
                                                     const Tensor& x) {
  Tensor u(x.rows(), 1), z(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    u(i, 0) = problem_->exact_u(t, x.row(i));
    problem_->exact_grad_u(t, x.row(i), z.row(i));
  }
  return {tape.constant(std::move(u)), tape.constant(std::move(z))};
}

std::vector<double> ExactUModel::values(double t, const Tensor& x) const {
  std::vector<double> out(x.rows());
  for (int i = 0; i < x.rows(); ++i) out[i] = problem_->exact_u(t, x.row(i));
  return out;
}

std::unique_ptr<UModel> make_u_model(nets::Model& model) {
  switch (model.kind) {
    case nets::ModelKind::kMlp:
      return std::make_unique<MlpUModel>(model.mlp);
    case nets::ModelKind::kMscale:
      return std::make_unique<MscaleUModel>(model.mscale);
    case nets::ModelKind::kBsdeStack:
      throw ConfigError(
          "make_u_model: the Deep BSDE stack is not a u(t,x) model");
  }
  return nullptr;
}

void BsdeStackModel::bind(Tape& tape, bool trainable) {
  bindings_.clear();
  leaves_.clear();
  y0_ = trainable ? tape.leaf(params_->y0) : tape.constant(params_->y0);
  z0_ = trainable ? tape.leaf(params_->z0) : tape.constant(params_->z0);
  if (trainable) {
    leaves_.push_back(y0_);
    leaves_.push_back(z0_);
  }
  for (auto& sn : params_->subnets) {
    bindings_.push_back(nets::bind_mlp(tape, sn, trainable));
    if (trainable) {
      auto sub = nets::binding_leaves(bindings_.back());
      leaves_.insert(leaves_.end(), sub.begin(), sub.end());
    }
  }
}

AdValue BsdeStackModel::eval_z(Tape& tape, int n, const Tensor& x) {
  if (n < 1 || n > (int)bindings_.size())
    throw ShapeError("deep-bsde: sub-network index out of range");
  return nets::mlp_apply(tape, bindings_[n - 1], tape.constant(x));
}

namespace {

// Forward path states for a decoupled problem as one tensor per station,
// plus sigma(t_n, X_n) dW_n as constant path data. Throws NumericError
// carrying (path, station) on blow-up.
struct PathData {
  std::vector<Tensor> x;          // N+1 stations, [m x d]
  std::vector<Tensor> sigma_dw;   // N stations, [m x d]
};

PathData roll_paths(const problems::ProblemDefinition& problem,
                    const sim::TimeGrid& grid, const sim::IncrementBatch& dw) {
  const int m = dw.m;
  const int d = problem.dim;
  const double dt = grid.dt();

  PathData out;
  out.x.reserve(grid.n_steps + 1);
  out.sigma_dw.reserve(grid.n_steps);

  Tensor x0(m, d);
  for (int p = 0; p < m; ++p)
    std::memcpy(x0.row(p), problem.x0.data(), d * sizeof(double));
  out.x.push_back(std::move(x0));

  std::vector<double> zdummy(d, 0.0);
  for (int n = 0; n < grid.n_steps; ++n) {
    const double t = grid.t(n);
    const Tensor& xn = out.x.back();
    Tensor sdw(m, d), xnext(m, d);
    for (int p = 0; p < m; ++p) {
      const double* dwrow = dw.station(n) + (std::size_t)p * d;
      problem.apply_sigma(t, xn.row(p), 0.0, dwrow, sdw.row(p));
      sim::euler_x_step(problem, t, std::span(xn.row(p), d), 0.0, zdummy,
                        std::span(dwrow, d), dt, std::span(xnext.row(p), d),
                        p);
    }
    const long bad = xnext.first_nonfinite();
    if (bad >= 0)
      throw NumericError("scheme: non-finite forward state", -1, bad / d,
                         n + 1);
    out.sigma_dw.push_back(std::move(sdw));
    out.x.push_back(std::move(xnext));
  }
  return out;
}

Tensor terminal_g(const problems::ProblemDefinition& problem,
                  const Tensor& xn) {
  Tensor g(xn.rows(), 1);
  for (int p = 0; p < xn.rows(); ++p) g(p, 0) = problem.g(xn.row(p));
  return g;
}

Tensor terminal_grad_g(const problems::ProblemDefinition& problem,
                       const Tensor& xn) {
  Tensor g(xn.rows(), xn.cols());
  for (int p = 0; p < xn.rows(); ++p) problem.grad_g(xn.row(p), g.row(p));
  return g;
}

void check_station_finite(const AdValue& v, int station, const char* what) {
  const long bad = v.value().first_nonfinite();
  if (bad >= 0)
    throw NumericError(std::string("scheme: non-finite ") + what, -1,
                       bad / std::max(1, v.cols()), station);
}

void require_decoupled(const SchemeConfig& config) {
  if (!config.problem->is_decoupled)
    throw ConfigError(
        "scheme: losses support decoupled problems only (mu, sigma free of "
        "Y, Z)");
}

std::vector<std::pair<AdValue, AdValue>> station_evals(
    UModel& model, Tape& tape, const sim::TimeGrid& grid,
    const PathData& paths) {
  std::vector<double> ts(paths.x.size());
  std::vector<const Tensor*> xs(paths.x.size());
  for (std::size_t n = 0; n < paths.x.size(); ++n) {
    ts[n] = grid.t((int)n);
    xs[n] = &paths.x[n];
  }
  return model.eval_u_grad_many(tape, ts, xs);
}

struct LossParts {
  AdValue pathwise;
  AdValue terminal_value;
  AdValue terminal_grad;
};

LossBreakdown finalize(Tape& tape, const SchemeConfig& config,
                       const LossParts& parts) {
  LossBreakdown out;
  out.beta1 = config.beta1;
  out.beta2 = config.beta2;
  AdValue total = parts.pathwise;
  total = tape.add(total, tape.scale(parts.terminal_value, config.beta1));
  total = tape.add(total, tape.scale(parts.terminal_grad, config.beta2));
  out.pathwise = parts.pathwise.scalar();
  out.terminal_value = parts.terminal_value.scalar();
  out.terminal_grad = parts.terminal_grad.scalar();
  out.total = total.scalar();
  out.total_node = total;
  if (!std::isfinite(out.total))
    throw NumericError("scheme: non-finite loss total", -1, -1, -1);
  return out;
}

// Y + phi(t, X, Y, Z) dt + Z . (sigma dW), all batch columns.
AdValue euler_y_update(Tape& tape, const problems::ProblemDefinition& problem,
                       double t, const Tensor& xn, AdValue y, AdValue z,
                       const Tensor& sigma_dw, double dt) {
  AdValue phi = problem.phi_tape(tape, t, xn, y, z);
  AdValue drift = tape.scale(phi, dt);
  AdValue diffusion = tape.rowwise_dot(z, tape.constant(sigma_dw));
  return tape.add(tape.add(y, drift), diffusion);
}

}  // namespace

LossBreakdown scheme1_loss(UModel& model, const SchemeConfig& config,
                           const sim::IncrementBatch& dw, Tape& tape) {
  config.validate();
  require_decoupled(config);
  const auto& problem = *config.problem;
  const int n_steps = config.n_steps;
  const double dt = config.grid.dt();
  const double m = (double)dw.m;

  const PathData paths = roll_paths(problem, config.grid, dw);
  const auto evals = station_evals(model, tape, config.grid, paths);

  AdValue y = evals[0].first;
  AdValue z = evals[0].second;
  AdValue pathwise_acc;
  AdValue u_n, z_n;
  for (int n = 1; n <= n_steps; ++n) {
    // reference value from one Euler step off the previous network values
    AdValue ystar = euler_y_update(tape, problem, config.grid.t(n - 1),
                                   paths.x[n - 1], y, z,
                                   paths.sigma_dw[n - 1], dt);
    u_n = evals[n].first;
    z_n = evals[n].second;
    check_station_finite(u_n, n, "network value");
    AdValue sq = tape.sum(tape.square(tape.sub(u_n, ystar)));
    pathwise_acc = pathwise_acc.valid() ? tape.add(pathwise_acc, sq) : sq;
    y = u_n;
    z = z_n;
  }

  LossParts parts;
  parts.pathwise = tape.scale(pathwise_acc, 1.0 / (m * n_steps));
  const Tensor& xN = paths.x[n_steps];
  parts.terminal_value = tape.scale(
      tape.sum(tape.square(
          tape.sub(u_n, tape.constant(terminal_g(problem, xN))))),
      1.0 / m);
  parts.terminal_grad = tape.scale(
      tape.sum(tape.square(
          tape.sub(z_n, tape.constant(terminal_grad_g(problem, xN))))),
      1.0 / m);
  return finalize(tape, config, parts);
}

LossBreakdown scheme2_loss(UModel& model, const SchemeConfig& config,
                           const sim::IncrementBatch& dw, Tape& tape) {
  config.validate();
  require_decoupled(config);
  const auto& problem = *config.problem;
  const int n_steps = config.n_steps;
  const double dt = config.grid.dt();
  const double m = (double)dw.m;

  const PathData paths = roll_paths(problem, config.grid, dw);
  const auto evals = station_evals(model, tape, config.grid, paths);

  AdValue y = evals[0].first;
  AdValue z = evals[0].second;
  AdValue pathwise_acc;
  AdValue ustar_n, z_n;
  for (int n = 1; n <= n_steps; ++n) {
    y = euler_y_update(tape, problem, config.grid.t(n - 1), paths.x[n - 1], y,
                       z, paths.sigma_dw[n - 1], dt);
    check_station_finite(y, n, "Euler value");
    ustar_n = evals[n].first;
    z_n = evals[n].second;
    check_station_finite(ustar_n, n, "network value");
    AdValue sq = tape.sum(tape.square(tape.sub(y, ustar_n)));
    pathwise_acc = pathwise_acc.valid() ? tape.add(pathwise_acc, sq) : sq;
    z = z_n;
  }

  LossParts parts;
  parts.pathwise = tape.scale(pathwise_acc, 1.0 / (m * n_steps));
  const Tensor& xN = paths.x[n_steps];
  // the terminal value term uses Y*_N: it is a direct network output
  parts.terminal_value = tape.scale(
      tape.sum(tape.square(
          tape.sub(ustar_n, tape.constant(terminal_g(problem, xN))))),
      1.0 / m);
  parts.terminal_grad = tape.scale(
      tape.sum(tape.square(
          tape.sub(z_n, tape.constant(terminal_grad_g(problem, xN))))),
      1.0 / m);
  return finalize(tape, config, parts);
}

LossBreakdown scheme3_loss(UModel& model, const SchemeConfig& config,
                           const sim::IncrementBatch& dw, Tape& tape) {
  config.validate();
  require_decoupled(config);
  const auto& problem = *config.problem;
  const int n_steps = config.n_steps;
  const double dt = config.grid.dt();
  const double m = (double)dw.m;

  // Branch (1) and branch (2) states coincide for decoupled problems under
  // either reading of the branch-2 diffusion arguments; both recursions are
  // still computed and verified so the assembly matches the printed update.
  const PathData paths1 = roll_paths(problem, config.grid, dw);
  const PathData paths2 = roll_paths(problem, config.grid, dw);
  for (int n = 0; n <= n_steps; ++n) {
    if (std::memcmp(paths1.x[n].data(), paths2.x[n].data(),
                    paths1.x[n].size() * sizeof(double)) != 0)
      throw NumericError("scheme3: branch states diverged on a decoupled "
                         "problem",
                         -1, -1, n);
  }

  const auto evals = station_evals(model, tape, config.grid, paths1);
  AdValue y2 = evals[0].first;
  AdValue z2 = evals[0].second;

  AdValue pathwise_acc;
  AdValue u1_n, z1_n;
  for (int n = 1; n <= n_steps; ++n) {
    // branch (2): Euler value step with branch-2 arguments
    y2 = euler_y_update(tape, problem, config.grid.t(n - 1), paths2.x[n - 1],
                        y2, z2, paths2.sigma_dw[n - 1], dt);
    check_station_finite(y2, n, "branch-2 Euler value");
    // branch (1): network values; branch states are bitwise equal, so one
    // evaluation serves both branches' Z
    u1_n = evals[n].first;
    z1_n = evals[n].second;
    check_station_finite(u1_n, n, "branch-1 network value");
    AdValue sq = tape.sum(tape.square(tape.sub(u1_n, y2)));
    pathwise_acc = pathwise_acc.valid() ? tape.add(pathwise_acc, sq) : sq;
    z2 = z1_n;
  }

  LossParts parts;
  parts.pathwise = tape.scale(pathwise_acc, 1.0 / (m * n_steps));
  const Tensor& xN = paths1.x[n_steps];
  parts.terminal_value = tape.scale(
      tape.sum(tape.square(
          tape.sub(u1_n, tape.constant(terminal_g(problem, xN))))),
      1.0 / m);
  parts.terminal_grad = tape.scale(
      tape.sum(tape.square(
          tape.sub(z1_n, tape.constant(terminal_grad_g(problem, xN))))),
      1.0 / m);
  return finalize(tape, config, parts);
}

LossBreakdown deep_bsde_loss(DeepBsdeModel& model, const SchemeConfig& config,
                             const sim::IncrementBatch& dw, Tape& tape) {
  config.validate();
  require_decoupled(config);
  if (model.n_steps() != config.n_steps)
    throw ConfigError("deep-bsde: model holds a different station count");
  const auto& problem = *config.problem;
  const int n_steps = config.n_steps;
  const double dt = config.grid.dt();
  const int m = dw.m;

  const PathData paths = roll_paths(problem, config.grid, dw);

  AdValue y = tape.bcast(model.y0(), m, 1);
  AdValue z = tape.bcast_rows(model.z0(), m);
  for (int n = 0; n < n_steps; ++n) {
    y = euler_y_update(tape, problem, config.grid.t(n), paths.x[n], y, z,
                       paths.sigma_dw[n], dt);
    check_station_finite(y, n + 1, "Euler value");
    if (n + 1 <= n_steps - 1) z = model.eval_z(tape, n + 1, paths.x[n + 1]);
  }

  AdValue loss = tape.scale(
      tape.sum(tape.square(
          tape.sub(y, tape.constant(terminal_g(problem, paths.x[n_steps]))))),
      1.0 / m);

  LossBreakdown out;
  out.beta1 = 1.0;
  out.beta2 = 0.0;
  out.pathwise = 0.0;
  out.terminal_value = loss.scalar();
  out.terminal_grad = 0.0;
  out.total = loss.scalar();
  out.total_node = loss;
  if (!std::isfinite(out.total))
    throw NumericError("deep-bsde: non-finite loss", -1, -1, -1);
  return out;
}

LossBreakdown scheme_loss(SchemeKind kind, UModel& model,
                          const SchemeConfig& config,
                          const sim::IncrementBatch& dw, Tape& tape) {
  switch (kind) {
    case SchemeKind::kS1:
      return scheme1_loss(model, config, dw, tape);
    case SchemeKind::kS2:
      return scheme2_loss(model, config, dw, tape);
    case SchemeKind::kS3:
      return scheme3_loss(model, config, dw, tape);
    case SchemeKind::kDeepBsde:
      throw ConfigError("scheme_loss: deep-bsde uses deep_bsde_loss");
  }
  throw ConfigError("scheme_loss: unknown scheme");
}

}  // namespace fbsde::schemes
