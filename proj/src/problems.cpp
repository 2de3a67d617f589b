#include "fbsde/problems.hpp"

#include <cmath>

#include "fbsde/errors.hpp"

namespace fbsde::problems {

void ProblemDefinition::apply_sigma(double t, const double* x, double y,
                                    const double* w, double* out) const {
  if (sigma_diagonal) {
    std::vector<double> diag(dim);
    sigma_diag(t, x, y, diag.data());
    for (int i = 0; i < dim; ++i) out[i] = diag[i] * w[i];
    return;
  }
  std::vector<double> mat((std::size_t)dim * dim);
  sigma(t, x, y, mat.data());
  for (int i = 0; i < dim; ++i) {
    double acc = 0.0;
    const double* row = mat.data() + (std::size_t)i * dim;
    for (int j = 0; j < dim; ++j) acc += row[j] * w[j];
    out[i] = acc;
  }
}

void BsbParams::validate() const {
  if (rate < 0.0) throw ConfigError("problem.rate: must be >= 0");
  if (sigma <= 0.0) throw ConfigError("problem.sigma: must be > 0");
  if (dim < 1) throw ConfigError("problem.dim: must be >= 1");
  if (horizon <= 0.0) throw ConfigError("problem.horizon: must be > 0");
}

std::vector<double> BsbParams::x0() const {
  std::vector<double> x(dim);
  for (int i = 0; i < dim; ++i) x[i] = (i % 2 == 0) ? 1.0 : 0.5;
  return x;
}

void OscBsbParams::validate() const {
  base.validate();
  if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma))
    throw ConfigError("problem.alpha/beta/gamma: must be finite");
}

void power_sums(std::span<const double> x, double& s1, double& s2,
                double& s3) {
  s1 = s2 = s3 = 0.0;
  for (double v : x) {
    s1 += v;
    s2 += v * v;
    s3 += v * v * v;
  }
}

namespace {

double sq_norm(const double* x, int d) {
  double acc = 0.0;
  for (int i = 0; i < d; ++i) acc += x[i] * x[i];
  return acc;
}

void fill_common_bsb(ProblemDefinition& p, const BsbParams& params) {
  const int d = params.dim;
  const double vol = params.sigma;
  const double r = params.rate;

  p.dim = d;
  p.horizon = params.horizon;
  p.x0 = params.x0();
  p.is_decoupled = true;
  p.sigma_diagonal = true;
  p.mu = [d](double, const double*, double, const double*, double* out) {
    for (int i = 0; i < d; ++i) out[i] = 0.0;
  };
  p.sigma_diag = [d, vol](double, const double* x, double, double* out) {
    for (int i = 0; i < d; ++i) out[i] = vol * x[i];
  };
  p.sigma = [d, vol](double, const double* x, double, double* out) {
    for (int i = 0; i < d * d; ++i) out[i] = 0.0;
    for (int i = 0; i < d; ++i) out[(std::size_t)i * d + i] = vol * x[i];
  };
  p.phi = [d, r](double, const double* x, double y, const double* z) {
    double zx = 0.0;
    for (int i = 0; i < d; ++i) zx += z[i] * x[i];
    return r * (y - zx);
  };
}

}  // namespace

ProblemDefinition make_bsb(const BsbParams& params) {
  params.validate();
  ProblemDefinition p;
  p.name = "bsb";
  fill_common_bsb(p, params);

  const int d = params.dim;
  const double r = params.rate;
  const double growth = params.rate + params.sigma * params.sigma;
  const double horizon = params.horizon;

  p.phi_tape = [r](ad::Tape& tape, double, const ad::Tensor& x, ad::AdValue y,
                   ad::AdValue z) {
    ad::AdValue zx = tape.rowwise_dot(z, tape.constant(x));
    return tape.scale(tape.sub(y, zx), r);
  };
  p.g = [d](const double* x) { return sq_norm(x, d); };
  p.grad_g = [d](const double* x, double* out) {
    for (int i = 0; i < d; ++i) out[i] = 2.0 * x[i];
  };
  p.exact_u = [d, growth, horizon](double t, const double* x) {
    return std::exp(growth * (horizon - t)) * sq_norm(x, d);
  };
  p.exact_grad_u = [d, growth, horizon](double t, const double* x,
                                        double* out) {
    const double factor = 2.0 * std::exp(growth * (horizon - t));
    for (int i = 0; i < d; ++i) out[i] = factor * x[i];
  };
  return p;
}

ProblemDefinition make_osc_bsb(const OscBsbParams& params) {
  params.validate();
  ProblemDefinition p;
  p.name = "bsb-osc";
  fill_common_bsb(p, params.base);

  const int d = params.base.dim;
  const double r = params.base.rate;
  const double vol = params.base.sigma;
  const double growth = r + vol * vol;
  const double horizon = params.base.horizon;
  const double a = params.alpha;
  const double b = params.beta;
  const double c = params.gamma;

  // P(t,x) = (r b S1 S2 - c S2 + 2 vol^2 b S3) cos(b S1 - c t)
  //          - (vol^2 b^2 / 2) S2^2 sin(b S1 - c t)
  auto pterm = [d, r, vol, b, c](double t, const double* x) {
    double s1, s2, s3;
    power_sums(std::span<const double>(x, (std::size_t)d), s1, s2, s3);
    const double phase = b * s1 - c * t;
    return (r * b * s1 * s2 - c * s2 + 2.0 * vol * vol * b * s3) *
               std::cos(phase) -
           0.5 * vol * vol * b * b * s2 * s2 * std::sin(phase);
  };

  p.phi = [d, r, a, growth, horizon, pterm](double t, const double* x,
                                            double y, const double* z) {
    double zx = 0.0;
    for (int i = 0; i < d; ++i) zx += z[i] * x[i];
    return r * (y - zx) +
           a * std::exp(growth * (horizon - t)) * pterm(t, x);
  };
  p.phi_tape = [d, r, a, growth, horizon, pterm](
                   ad::Tape& tape, double t, const ad::Tensor& x, ad::AdValue y,
                   ad::AdValue z) {
    ad::AdValue zx = tape.rowwise_dot(z, tape.constant(x));
    ad::AdValue lin = tape.scale(tape.sub(y, zx), r);
    const double factor = a * std::exp(growth * (horizon - t));
    ad::Tensor src(x.rows(), 1);
    for (int i = 0; i < x.rows(); ++i)
      src(i, 0) = factor * pterm(t, x.row(i));
    return tape.add(lin, tape.constant(std::move(src)));
  };
  p.g = [d, a, b, c, horizon](const double* x) {
    double s1, s2, s3;
    power_sums(std::span<const double>(x, (std::size_t)d), s1, s2, s3);
    return s2 * (1.0 + a * std::sin(b * s1 - c * horizon));
  };
  p.grad_g = [d, a, b, c, horizon](const double* x, double* out) {
    double s1, s2, s3;
    power_sums(std::span<const double>(x, (std::size_t)d), s1, s2, s3);
    const double phase = b * s1 - c * horizon;
    const double osc = 1.0 + a * std::sin(phase);
    const double common = s2 * a * b * std::cos(phase);
    for (int i = 0; i < d; ++i) out[i] = 2.0 * x[i] * osc + common;
  };
  p.exact_u = [d, a, b, c, growth, horizon](double t, const double* x) {
    double s1, s2, s3;
    power_sums(std::span<const double>(x, (std::size_t)d), s1, s2, s3);
    return std::exp(growth * (horizon - t)) * s2 *
           (1.0 + a * std::sin(b * s1 - c * t));
  };
  p.exact_grad_u = [d, a, b, c, growth, horizon](double t, const double* x,
                                                 double* out) {
    double s1, s2, s3;
    power_sums(std::span<const double>(x, (std::size_t)d), s1, s2, s3);
    const double e = std::exp(growth * (horizon - t));
    const double phase = b * s1 - c * t;
    const double osc = 1.0 + a * std::sin(phase);
    const double common = e * s2 * a * b * std::cos(phase);
    for (int i = 0; i < d; ++i) out[i] = 2.0 * e * x[i] * osc + common;
  };
  return p;
}

}  // namespace fbsde::problems
