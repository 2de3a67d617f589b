#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbsde/tape.hpp"

namespace fbsde::problems {

// A quasilinear parabolic PDE posed through its FBSDE coefficients. All
// callbacks work on plain doubles; phi additionally has a tape form so the
// training losses can differentiate through network-dependent (Y, Z)
// arguments. Immutable after construction and freely shared.
struct ProblemDefinition {
  std::string name;
  int dim = 0;
  double horizon = 0.0;
  std::vector<double> x0;
  // mu and sigma of decoupled problems ignore y and z.
  bool is_decoupled = true;
  // When set, sigma(t,x) is diag(sigma_diag(t,x)) and the d=100 inner loops
  // stay O(d).
  bool sigma_diagonal = true;

  // drift, d components into mu_out
  std::function<void(double t, const double* x, double y, const double* z,
                     double* mu_out)>
      mu;
  // diagonal diffusion fast path, d components
  std::function<void(double t, const double* x, double y, double* diag_out)>
      sigma_diag;
  // general diffusion, d*d row-major
  std::function<void(double t, const double* x, double y, double* sig_out)>
      sigma;
  // driver
  std::function<double(double t, const double* x, double y, const double* z)>
      phi;
  // driver on tape: X is constant path data [m x d], Y [m x 1], Z [m x d]
  std::function<ad::AdValue(ad::Tape&, double t, const ad::Tensor& x,
                            ad::AdValue y, ad::AdValue z)>
      phi_tape;
  // terminal data
  std::function<double(const double* x)> g;
  std::function<void(const double* x, double* grad_out)> grad_g;
  // closed-form solution, when known
  std::function<double(double t, const double* x)> exact_u;
  std::function<void(double t, const double* x, double* grad_out)> exact_grad_u;

  bool has_exact() const { return (bool)exact_u; }

  // sigma(t,x,y) applied to a vector w, d components into out.
  void apply_sigma(double t, const double* x, double y, const double* w,
                   double* out) const;
};

// Black-Scholes-Barenblatt benchmark parameters. x0 is the repeating
// pattern (1, 0.5, 1, 0.5, ...).
struct BsbParams {
  double rate = 0.05;
  double sigma = 0.4;
  int dim = 100;
  double horizon = 1.0;

  void validate() const;
  std::vector<double> x0() const;
};

// BSB with a time-oscillatory factor in the terminal data and solution.
struct OscBsbParams {
  BsbParams base;
  double alpha = 0.025;
  double beta = 0.25;
  double gamma = 32.0;

  void validate() const;
};

ProblemDefinition make_bsb(const BsbParams& params);
ProblemDefinition make_osc_bsb(const OscBsbParams& params);

// (S1, S2, S3) with S_j = sum_i x_i^j.
void power_sums(std::span<const double> x, double& s1, double& s2, double& s3);

}  // namespace fbsde::problems
