#include "fbsde/networks.hpp"

#include <cmath>

#include "fbsde/errors.hpp"
#include "fbsde/rng.hpp"

namespace fbsde::nets {

void MlpConfig::validate() const {
  if (input_dim < 1) throw ConfigError("net: input_dim must be >= 1");
  if (hidden_layers < 1) throw ConfigError("net: hidden_layers must be >= 1");
  if (hidden_width < 1) throw ConfigError("net: hidden_width must be >= 1");
  if (output_dim < 1) throw ConfigError("net: output_dim must be >= 1");
}

void MscaleConfig::validate() const {
  subnet.validate();
  if (scales.empty()) throw ConfigError("net: mscale needs >= 1 subnet");
  for (const auto& s : scales)
    if ((int)s.size() != subnet.input_dim)
      throw ConfigError("net: scale vector length must equal input_dim");
}

MscaleConfig MscaleConfig::time_scaled(const MlpConfig& subnet, int n_subnets,
                                       double base) {
  MscaleConfig cfg;
  cfg.subnet = subnet;
  double factor = 1.0;
  for (int i = 0; i < n_subnets; ++i) {
    std::vector<double> s(subnet.input_dim, 1.0);
    s[0] = factor;
    cfg.scales.push_back(std::move(s));
    factor *= base;
  }
  return cfg;
}

namespace {

// One uniform draw per (tensor slot, element), so initialization does not
// depend on traversal order.
double glorot_draw(const sim::RngStream& stream, uint32_t tensor_slot,
                   uint32_t element, double bound) {
  const double u = stream.uniform(tensor_slot, 0, element);
  return bound * (2.0 * u - 1.0);
}

void init_layer(const sim::RngStream& stream, uint32_t slot, int fan_out,
                int fan_in, ad::Tensor& w, ad::Tensor& b) {
  const double bound = std::sqrt(6.0 / (double)(fan_in + fan_out));
  w = ad::Tensor(fan_out, fan_in);
  for (std::size_t e = 0; e < w.size(); ++e)
    w.data()[e] = glorot_draw(stream, slot, (uint32_t)e, bound);
  b = ad::Tensor(fan_out, 1);
}

MlpParams init_mlp_with(const sim::RngStream& stream, const MlpConfig& config,
                        uint32_t slot_base) {
  MlpParams p;
  p.config = config;
  const int layers = config.hidden_layers + 1;
  p.weights.resize(layers);
  p.biases.resize(layers);
  int fan_in = config.input_dim;
  for (int k = 0; k < layers; ++k) {
    const int fan_out =
        (k == config.hidden_layers) ? config.output_dim : config.hidden_width;
    init_layer(stream, slot_base + (uint32_t)k, fan_out, fan_in, p.weights[k],
               p.biases[k]);
    fan_in = fan_out;
  }
  return p;
}

// Slot spacing between structural units; generous enough for any depth.
constexpr uint32_t kSlotStride = 1024;

}  // namespace

MlpParams init_mlp(const MlpConfig& config, uint64_t seed) {
  config.validate();
  return init_mlp_with(sim::RngStream::param_init(seed), config, 0);
}

MscaleParams init_mscale(const MscaleConfig& config, uint64_t seed) {
  config.validate();
  const auto stream = sim::RngStream::param_init(seed);
  MscaleParams p;
  p.config = config;
  for (int i = 0; i < config.n_subnets(); ++i)
    p.subnets.push_back(
        init_mlp_with(stream, config.subnet, (uint32_t)(i + 1) * kSlotStride));
  const int n = config.n_subnets();
  const double bound = std::sqrt(6.0 / (double)(n + 1));
  p.combo_w = ad::Tensor(n, 1);
  for (int i = 0; i < n; ++i)
    p.combo_w.data()[i] = glorot_draw(stream, 1, (uint32_t)i, bound);
  p.combo_b = ad::Tensor(1, 1);
  return p;
}

BsdeStackParams init_bsde_stack(const MlpConfig& subnet, int n_steps,
                                uint64_t seed) {
  subnet.validate();
  if (n_steps < 1) throw ConfigError("deep-bsde: n_steps must be >= 1");
  const auto stream = sim::RngStream::param_init(seed);
  BsdeStackParams p;
  p.subnet = subnet;
  p.n_steps = n_steps;
  p.y0 = ad::Tensor(1, 1);
  p.y0.data()[0] = glorot_draw(stream, 2, 0, 1.0);
  p.z0 = ad::Tensor(subnet.input_dim, 1);
  for (int i = 0; i < subnet.input_dim; ++i)
    p.z0.data()[i] = glorot_draw(stream, 3, (uint32_t)i, 1.0);
  for (int n = 1; n < n_steps; ++n)
    p.subnets.push_back(
        init_mlp_with(stream, subnet, (uint32_t)(n + 3) * kSlotStride));
  return p;
}

MlpBinding bind_mlp(ad::Tape& tape, const MlpParams& params, bool trainable) {
  MlpBinding b;
  b.config = &params.config;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    b.weights.push_back(trainable ? tape.leaf(params.weights[k])
                                  : tape.constant(params.weights[k]));
    b.biases.push_back(trainable ? tape.leaf(params.biases[k])
                                 : tape.constant(params.biases[k]));
  }
  return b;
}

MscaleBinding bind_mscale(ad::Tape& tape, const MscaleParams& params,
                          bool trainable) {
  MscaleBinding b;
  b.config = &params.config;
  for (const auto& sn : params.subnets)
    b.subnets.push_back(bind_mlp(tape, sn, trainable));
  b.combo_w = trainable ? tape.leaf(params.combo_w)
                        : tape.constant(params.combo_w);
  b.combo_b = trainable ? tape.leaf(params.combo_b)
                        : tape.constant(params.combo_b);
  return b;
}

std::vector<ad::AdValue> binding_leaves(const MlpBinding& b) {
  std::vector<ad::AdValue> out;
  for (std::size_t k = 0; k < b.weights.size(); ++k) {
    out.push_back(b.weights[k]);
    out.push_back(b.biases[k]);
  }
  return out;
}

std::vector<ad::AdValue> binding_leaves(const MscaleBinding& b) {
  std::vector<ad::AdValue> out;
  for (const auto& sn : b.subnets) {
    auto sub = binding_leaves(sn);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  out.push_back(b.combo_w);
  out.push_back(b.combo_b);
  return out;
}

ad::AdValue mlp_apply(ad::Tape& tape, const MlpBinding& b, ad::AdValue input) {
  if (input.cols() != b.config->input_dim)
    throw ShapeError("mlp_apply: input dimension mismatch");
  ad::AdValue h = input;
  const int layers = (int)b.weights.size();
  for (int k = 0; k < layers; ++k) {
    h = tape.add_rowvec(tape.matmul_nt(h, b.weights[k]), b.biases[k]);
    if (k < layers - 1)
      h = b.config->activation == Activation::kSine ? tape.sin(h)
                                                    : tape.tanh(h);
  }
  return h;
}

ad::AdValue mscale_apply(ad::Tape& tape, const MscaleBinding& b,
                         ad::AdValue input) {
  const auto& cfg = *b.config;
  if (input.cols() != cfg.subnet.input_dim)
    throw ShapeError("mscale_apply: input dimension mismatch");
  ad::AdValue combo_row = tape.transpose(b.combo_w);  // 1 x n
  ad::AdValue acc;
  for (int i = 0; i < cfg.n_subnets(); ++i) {
    ad::AdValue scaled = tape.mul_rowvec(
        input, tape.constant(ad::Tensor::colvec(cfg.scales[i])));
    ad::AdValue fi = mlp_apply(tape, b.subnets[i], scaled);
    ad::AdValue wi = tape.slice_cols(combo_row, i, 1);  // 1x1
    ad::AdValue term = tape.mul_scalar(wi, fi);
    acc = acc.valid() ? tape.add(acc, term) : term;
  }
  return tape.add(acc, tape.bcast(b.combo_b, acc.rows(), acc.cols()));
}

namespace {

ad::Tensor station_input(double t, const ad::Tensor& x) {
  ad::Tensor in(x.rows(), x.cols() + 1);
  for (int i = 0; i < x.rows(); ++i) {
    double* row = in.row(i);
    row[0] = t;
    for (int j = 0; j < x.cols(); ++j) row[j + 1] = x(i, j);
  }
  return in;
}

template <typename Binding, typename Apply>
std::pair<ad::AdValue, ad::AdValue> ugrad_impl(ad::Tape& tape,
                                               const Binding& b, double t,
                                               const ad::Tensor& x,
                                               Apply apply) {
  ad::AdValue input = tape.leaf(station_input(t, x));
  ad::AdValue u = apply(tape, b, input);
  if (u.cols() != 1) throw ShapeError("ugrad: network output is not scalar");
  // Rows are independent, so the gradient of the batch sum carries each
  // row's own input gradient.
  ad::AdValue gin = tape.grad_wrt_input(tape.sum(u), input);
  ad::AdValue z = tape.slice_cols(gin, 1, x.cols());
  return {u, z};
}

}  // namespace

std::pair<ad::AdValue, ad::AdValue> ugrad_batch(ad::Tape& tape,
                                                const MlpBinding& b, double t,
                                                const ad::Tensor& x) {
  return ugrad_impl(tape, b, t, x,
                    [](ad::Tape& tp, const MlpBinding& bb, ad::AdValue in) {
                      return mlp_apply(tp, bb, in);
                    });
}

std::pair<ad::AdValue, ad::AdValue> ugrad_batch(ad::Tape& tape,
                                                const MscaleBinding& b,
                                                double t, const ad::Tensor& x) {
  return ugrad_impl(tape, b, t, x,
                    [](ad::Tape& tp, const MscaleBinding& bb, ad::AdValue in) {
                      return mscale_apply(tp, bb, in);
                    });
}

ad::AdValue u_batch(ad::Tape& tape, const MlpBinding& b, double t,
                    const ad::Tensor& x) {
  return mlp_apply(tape, b, tape.constant(station_input(t, x)));
}

ad::AdValue u_batch(ad::Tape& tape, const MscaleBinding& b, double t,
                    const ad::Tensor& x) {
  return mscale_apply(tape, b, tape.constant(station_input(t, x)));
}

ad::Tensor stacked_station_input(std::span<const double> ts,
                                 std::span<const ad::Tensor* const> xs) {
  if (ts.empty() || ts.size() != xs.size())
    throw ShapeError("stacked_station_input: station count mismatch");
  const int m = xs[0]->rows();
  const int d = xs[0]->cols();
  ad::Tensor in((int)ts.size() * m, d + 1);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (xs[k]->rows() != m || xs[k]->cols() != d)
      throw ShapeError("stacked_station_input: inconsistent station shapes");
    for (int i = 0; i < m; ++i) {
      double* row = in.row((int)k * m + i);
      row[0] = ts[k];
      const double* src = xs[k]->row(i);
      for (int j = 0; j < d; ++j) row[j + 1] = src[j];
    }
  }
  return in;
}

namespace {

template <typename Binding, typename Apply>
std::pair<ad::AdValue, ad::AdValue> ugrad_stacked_impl(
    ad::Tape& tape, const Binding& b, std::span<const double> ts,
    std::span<const ad::Tensor* const> xs, Apply apply) {
  const int d = xs[0]->cols();
  ad::AdValue input = tape.leaf(stacked_station_input(ts, xs));
  ad::AdValue u = apply(tape, b, input);
  if (u.cols() != 1)
    throw ShapeError("ugrad_stacked: network output is not scalar");
  ad::AdValue gin = tape.grad_wrt_input(tape.sum(u), input);
  return {u, tape.slice_cols(gin, 1, d)};
}

}  // namespace

std::pair<ad::AdValue, ad::AdValue> ugrad_stacked(
    ad::Tape& tape, const MlpBinding& b, std::span<const double> ts,
    std::span<const ad::Tensor* const> xs) {
  return ugrad_stacked_impl(
      tape, b, ts, xs,
      [](ad::Tape& tp, const MlpBinding& bb, ad::AdValue in) {
        return mlp_apply(tp, bb, in);
      });
}

std::pair<ad::AdValue, ad::AdValue> ugrad_stacked(
    ad::Tape& tape, const MscaleBinding& b, std::span<const double> ts,
    std::span<const ad::Tensor* const> xs) {
  return ugrad_stacked_impl(
      tape, b, ts, xs,
      [](ad::Tape& tp, const MscaleBinding& bb, ad::AdValue in) {
        return mscale_apply(tp, bb, in);
      });
}

namespace {

ad::Tensor point_state(std::span<const double> x) {
  ad::Tensor row(1, (int)x.size());
  for (std::size_t j = 0; j < x.size(); ++j) row(0, j) = x[j];
  return row;
}

}  // namespace

ad::AdValue mlp_eval(ad::Tape& tape, const MlpParams& params, double t,
                     std::span<const double> x) {
  if ((int)x.size() + 1 != params.config.input_dim)
    throw ShapeError("mlp_eval: state dimension mismatch");
  auto b = bind_mlp(tape, params, false);
  return tape.sum(u_batch(tape, b, t, point_state(x)));
}

std::pair<ad::AdValue, ad::AdValue> mlp_eval_with_spatial_grad(
    ad::Tape& tape, const MlpParams& params, double t,
    std::span<const double> x) {
  if ((int)x.size() + 1 != params.config.input_dim)
    throw ShapeError("mlp_eval: state dimension mismatch");
  auto b = bind_mlp(tape, params, false);
  auto [u, z] = ugrad_batch(tape, b, t, point_state(x));
  return {tape.sum(u), tape.transpose(z)};
}

ad::AdValue mscale_eval(ad::Tape& tape, const MscaleParams& params, double t,
                        std::span<const double> x) {
  if ((int)x.size() + 1 != params.config.subnet.input_dim)
    throw ShapeError("mscale_eval: state dimension mismatch");
  auto b = bind_mscale(tape, params, false);
  return tape.sum(u_batch(tape, b, t, point_state(x)));
}

std::pair<ad::AdValue, ad::AdValue> mscale_eval_with_spatial_grad(
    ad::Tape& tape, const MscaleParams& params, double t,
    std::span<const double> x) {
  if ((int)x.size() + 1 != params.config.subnet.input_dim)
    throw ShapeError("mscale_eval: state dimension mismatch");
  auto b = bind_mscale(tape, params, false);
  auto [u, z] = ugrad_batch(tape, b, t, point_state(x));
  return {tape.sum(u), tape.transpose(z)};
}

namespace {

ad::Tensor mlp_values_tensor(const MlpParams& p, const ad::Tensor& input) {
  ad::Tensor h = input;
  const int layers = (int)p.weights.size();
  for (int k = 0; k < layers; ++k) {
    h = ad::t_add_rowvec(ad::t_matmul_nt(h, p.weights[k]), p.biases[k]);
    if (k < layers - 1)
      h = p.config.activation == Activation::kSine ? ad::t_sin(h)
                                                   : ad::t_tanh(h);
  }
  return h;
}

}  // namespace

std::vector<double> mlp_values(const MlpParams& params, double t,
                               const ad::Tensor& x) {
  const ad::Tensor out = mlp_values_tensor(params, station_input(t, x));
  return std::vector<double>(out.data(), out.data() + out.size());
}

std::vector<double> mscale_values(const MscaleParams& params, double t,
                                  const ad::Tensor& x) {
  const ad::Tensor input = station_input(t, x);
  const auto& cfg = params.config;
  ad::Tensor acc;
  for (int i = 0; i < cfg.n_subnets(); ++i) {
    const ad::Tensor scaled =
        ad::t_mul_rowvec(input, ad::Tensor::colvec(cfg.scales[i]));
    ad::Tensor fi = mlp_values_tensor(params.subnets[i], scaled);
    fi = ad::t_scale(fi, params.combo_w(i, 0));
    acc = acc.empty() ? std::move(fi) : ad::t_add(acc, fi);
  }
  acc = ad::t_add(acc, ad::t_bcast(params.combo_b, acc.rows(), acc.cols()));
  return std::vector<double>(acc.data(), acc.data() + acc.size());
}

bool is_mscale_preset(const std::string& name) {
  return name == "paper-ms4" || name == "desk-ms4";
}

MlpConfig mlp_preset(const std::string& name, int dim) {
  MlpConfig cfg;
  cfg.input_dim = dim + 1;
  cfg.activation = Activation::kSine;
  if (name == "paper-fc") {
    cfg.hidden_layers = 5;
    cfg.hidden_width = 256;
  } else if (name == "desk-fc") {
    cfg.hidden_layers = 4;
    cfg.hidden_width = 64;
  } else {
    throw ConfigError("net: unknown mlp preset '" + name + "'");
  }
  return cfg;
}

MscaleConfig mscale_preset(const std::string& name, int dim) {
  MlpConfig sub;
  sub.input_dim = dim + 1;
  sub.activation = Activation::kSine;
  if (name == "paper-ms4") {
    sub.hidden_layers = 5;
    sub.hidden_width = 64;
  } else if (name == "desk-ms4") {
    sub.hidden_layers = 4;
    sub.hidden_width = 32;
  } else {
    throw ConfigError("net: unknown mscale preset '" + name + "'");
  }
  return MscaleConfig::time_scaled(sub, 4, 3.0);
}

}  // namespace fbsde::nets
