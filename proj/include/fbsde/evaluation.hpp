#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fbsde/model.hpp"
#include "fbsde/problems.hpp"
#include "fbsde/simulate.hpp"

namespace fbsde::evaluation {

// u(t, x) evaluated without a tape, batched per station.
class PointEvaluator {
 public:
  virtual ~PointEvaluator() = default;
  virtual void values(double t, const ad::Tensor& x,
                      std::vector<double>& out) const = 0;
};

// Network checkpoint as an evaluator.
class ModelEvaluator : public PointEvaluator {
 public:
  explicit ModelEvaluator(const nets::Model& model);
  void values(double t, const ad::Tensor& x,
              std::vector<double>& out) const override;

 private:
  const nets::Model* model_;
};

// Closed-form solution as an evaluator (reference curves, trivial oracles).
class ExactEvaluator : public PointEvaluator {
 public:
  explicit ExactEvaluator(const problems::ProblemDefinition& problem);
  void values(double t, const ad::Tensor& x,
              std::vector<double>& out) const override;

 private:
  const problems::ProblemDefinition* problem_;
};

// Per-station relative error of an approximation along verification paths.
struct ErrorReport {
  std::vector<double> t;     // station times
  std::vector<double> mean;  // mean of e_n over paths
  std::vector<double> sd;    // sample standard deviation of e_n
  int n_paths = 0;
  double overall_max_mean = 0.0;  // max over stations of mean
  double y0_rel_error = 0.0;      // relative error at (0, x0)

  double mean_plus_2sd(std::size_t station) const {
    return mean[station] + 2.0 * sd[station];
  }
};

// Simulates fresh fine-grid forward paths (reserved verification stream)
// and aggregates e_n = |u_approx - u| / |u| per station. Requires a
// decoupled problem with a closed-form solution.
ErrorReport verify_relative_error(const PointEvaluator& u_approx,
                                  const problems::ProblemDefinition& problem,
                                  int n_paths, int fine_steps,
                                  uint64_t seed);

// Same measurement with per-path perturbed starts
// x0_j (1 + eps_j), eps_j uniform on (-R, R); path 0 stays at x0. R = 0
// reproduces verify_relative_error exactly.
ErrorReport neighborhood_study(const PointEvaluator& u_approx,
                               const problems::ProblemDefinition& problem,
                               double radius, int n_paths, int fine_steps,
                               uint64_t seed);

// First-level Richardson combination 2 b - a of approximations at N and 4N.
double richardson(double value_n, double value_4n);

struct ConvergenceRow {
  int n_steps = 0;
  double raw_error = 0.0;
  std::optional<double> extrapolated_error;
};

// Y0 relative-error table over a station-count ladder, with the
// extrapolated column filled for consecutive 4x pairs. `y0_of` returns the
// trained approximation of u(0, x0) for a given N (training or loading is
// the caller's business).
std::vector<ConvergenceRow> convergence_table(
    const problems::ProblemDefinition& problem, const std::vector<int>& n_list,
    const std::function<double(int n_steps)>& y0_of, bool extrapolate);

// Mean relative error per station of the field-level extrapolation
// 2 u^{4N} - u^N along shared verification paths, restricted to
// t <= t_max (the terminal fit breaks the shared-leading-constant
// assumption past that).
ErrorReport extrapolated_field_error(const PointEvaluator& coarse,
                                     const PointEvaluator& fine,
                                     const problems::ProblemDefinition& problem,
                                     int n_paths, int fine_steps, double t_max,
                                     uint64_t seed);

}  // namespace fbsde::evaluation
