#include "fbsde/evaluation.hpp"

#include <cmath>

#include "fbsde/errors.hpp"

namespace fbsde::evaluation {

ModelEvaluator::ModelEvaluator(const nets::Model& model) : model_(&model) {
  if (model.kind == nets::ModelKind::kBsdeStack)
    throw ConfigError(
        "evaluate: a deep-bsde checkpoint approximates only Y0, not u(t,x)");
}

void ModelEvaluator::values(double t, const ad::Tensor& x,
                            std::vector<double>& out) const {
  out = model_->kind == nets::ModelKind::kMlp
            ? nets::mlp_values(model_->mlp, t, x)
            : nets::mscale_values(model_->mscale, t, x);
}

ExactEvaluator::ExactEvaluator(const problems::ProblemDefinition& problem)
    : problem_(&problem) {
  if (!problem.has_exact())
    throw ConfigError("evaluate: problem has no closed-form solution");
}

void ExactEvaluator::values(double t, const ad::Tensor& x,
                            std::vector<double>& out) const {
  out.resize(x.rows());
  for (int i = 0; i < x.rows(); ++i) out[i] = problem_->exact_u(t, x.row(i));
}

namespace {

std::vector<double> perturbed_starts(const problems::ProblemDefinition& problem,
                                     double radius, int n_paths,
                                     uint64_t seed) {
  std::vector<double> starts((std::size_t)n_paths * problem.dim);
  const auto stream = sim::RngStream::neighborhood(seed);
  for (int p = 0; p < n_paths; ++p) {
    double* row = starts.data() + (std::size_t)p * problem.dim;
    for (int j = 0; j < problem.dim; ++j) {
      // path 0 is retained unperturbed
      const double eps =
          (p == 0) ? 0.0
                   : radius * (2.0 * stream.uniform((uint64_t)p, 0,
                                                    (uint32_t)j) -
                               1.0);
      row[j] = problem.x0[j] * (1.0 + eps);
    }
  }
  return starts;
}

ErrorReport error_along_paths(const PointEvaluator& u_approx,
                              const problems::ProblemDefinition& problem,
                              int n_paths, int fine_steps, uint64_t seed,
                              const std::vector<double>& starts) {
  if (!problem.has_exact())
    throw ConfigError("verify: problem has no closed-form solution");
  if (n_paths < 1 || fine_steps < 1)
    throw ConfigError("verify: n_paths and fine_steps must be >= 1");

  const sim::TimeGrid grid(fine_steps, problem.horizon);
  ErrorReport report;
  report.n_paths = n_paths;
  report.t.resize(fine_steps + 1);
  report.mean.resize(fine_steps + 1);
  report.sd.resize(fine_steps + 1);

  std::vector<double> approx;
  std::vector<double> errors(n_paths);
  sim::for_each_station(
      problem, grid, n_paths, sim::RngStream::verification(seed), starts,
      [&](int n, double t, const ad::Tensor& x) {
        u_approx.values(t, x, approx);
        double acc = 0.0;
        for (int p = 0; p < n_paths; ++p) {
          const double exact = problem.exact_u(t, x.row(p));
          errors[p] = std::abs(approx[p] - exact) / std::abs(exact);
          acc += errors[p];
        }
        const double mean = acc / n_paths;
        double var = 0.0;
        for (int p = 0; p < n_paths; ++p) {
          const double d = errors[p] - mean;
          var += d * d;
        }
        report.t[n] = t;
        report.mean[n] = mean;
        report.sd[n] = n_paths > 1 ? std::sqrt(var / (n_paths - 1)) : 0.0;
      });

  for (double m : report.mean)
    report.overall_max_mean = std::max(report.overall_max_mean, m);

  ad::Tensor x0(1, problem.dim);
  for (int j = 0; j < problem.dim; ++j) x0(0, j) = problem.x0[j];
  u_approx.values(0.0, x0, approx);
  const double exact0 = problem.exact_u(0.0, problem.x0.data());
  report.y0_rel_error = std::abs(approx[0] - exact0) / std::abs(exact0);
  return report;
}

}  // namespace

ErrorReport verify_relative_error(const PointEvaluator& u_approx,
                                  const problems::ProblemDefinition& problem,
                                  int n_paths, int fine_steps, uint64_t seed) {
  return error_along_paths(u_approx, problem, n_paths, fine_steps, seed, {});
}

ErrorReport neighborhood_study(const PointEvaluator& u_approx,
                               const problems::ProblemDefinition& problem,
                               double radius, int n_paths, int fine_steps,
                               uint64_t seed) {
  if (radius < 0.0) throw ConfigError("neighborhood: radius must be >= 0");
  return error_along_paths(u_approx, problem, n_paths, fine_steps, seed,
                           perturbed_starts(problem, radius, n_paths, seed));
}

double richardson(double value_n, double value_4n) {
  return 2.0 * value_4n - value_n;
}

std::vector<ConvergenceRow> convergence_table(
    const problems::ProblemDefinition& problem, const std::vector<int>& n_list,
    const std::function<double(int n_steps)>& y0_of, bool extrapolate) {
  if (n_list.empty()) throw ConfigError("convergence: empty N list");
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1])
      throw ConfigError("convergence: N list must be ascending");
    if (extrapolate && n_list[i] != 4 * n_list[i - 1])
      throw ConfigError(
          "convergence: extrapolation needs each N to be 4x the previous");
  }
  const double exact = problem.exact_u(0.0, problem.x0.data());

  std::vector<ConvergenceRow> rows;
  std::vector<double> y0s;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const double y0 = y0_of(n_list[i]);
    y0s.push_back(y0);
    ConvergenceRow row;
    row.n_steps = n_list[i];
    row.raw_error = std::abs(y0 - exact) / std::abs(exact);
    if (extrapolate && i > 0) {
      const double ex = richardson(y0s[i - 1], y0s[i]);
      row.extrapolated_error = std::abs(ex - exact) / std::abs(exact);
    }
    rows.push_back(row);
  }
  return rows;
}

ErrorReport extrapolated_field_error(const PointEvaluator& coarse,
                                     const PointEvaluator& fine,
                                     const problems::ProblemDefinition& problem,
                                     int n_paths, int fine_steps, double t_max,
                                     uint64_t seed) {
  if (!problem.has_exact())
    throw ConfigError("extrapolate: problem has no closed-form solution");
  const sim::TimeGrid grid(fine_steps, problem.horizon);

  ErrorReport report;
  report.n_paths = n_paths;

  std::vector<double> uc, uf;
  std::vector<double> errors(n_paths);
  sim::for_each_station(
      problem, grid, n_paths, sim::RngStream::verification(seed), {},
      [&](int /*n*/, double t, const ad::Tensor& x) {
        if (t > t_max + 1e-12) return;
        coarse.values(t, x, uc);
        fine.values(t, x, uf);
        double acc = 0.0;
        for (int p = 0; p < n_paths; ++p) {
          const double exact = problem.exact_u(t, x.row(p));
          errors[p] =
              std::abs(richardson(uc[p], uf[p]) - exact) / std::abs(exact);
          acc += errors[p];
        }
        const double mean = acc / n_paths;
        double var = 0.0;
        for (int p = 0; p < n_paths; ++p) {
          const double d = errors[p] - mean;
          var += d * d;
        }
        report.t.push_back(t);
        report.mean.push_back(mean);
        report.sd.push_back(n_paths > 1 ? std::sqrt(var / (n_paths - 1))
                                        : 0.0);
      });
  for (double m : report.mean)
    report.overall_max_mean = std::max(report.overall_max_mean, m);

  ad::Tensor x0(1, problem.dim);
  for (int j = 0; j < problem.dim; ++j) x0(0, j) = problem.x0[j];
  coarse.values(0.0, x0, uc);
  fine.values(0.0, x0, uf);
  const double exact0 = problem.exact_u(0.0, problem.x0.data());
  report.y0_rel_error =
      std::abs(richardson(uc[0], uf[0]) - exact0) / std::abs(exact0);
  return report;
}

}  // namespace fbsde::evaluation
