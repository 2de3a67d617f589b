#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbsde/tape.hpp"

namespace fbsde::nets {

enum class Activation { kSine, kTanh };

// Fully connected network shape. For u-networks the input is (t, x), i.e.
// input_dim = d + 1 with the time coordinate prepended and no input
// normalization.
struct MlpConfig {
  int input_dim = 0;
  int hidden_layers = 1;
  int hidden_width = 1;
  int output_dim = 1;
  Activation activation = Activation::kSine;

  void validate() const;
  bool operator==(const MlpConfig&) const = default;
};

struct MlpParams {
  MlpConfig config;
  std::vector<ad::Tensor> weights;  // [out x in] per layer
  std::vector<ad::Tensor> biases;   // [out x 1] per layer
};

// Parallel sub-networks on scaled inputs, summed with trainable combination
// weights and a shared bias. Scale vectors are fixed (not trained).
struct MscaleConfig {
  MlpConfig subnet;
  std::vector<std::vector<double>> scales;  // one per subnet, input_dim each

  int n_subnets() const { return (int)scales.size(); }
  void validate() const;
  // Scales (base^0, base^1, ...) applied to the time coordinate only.
  static MscaleConfig time_scaled(const MlpConfig& subnet, int n_subnets,
                                  double base);
};

struct MscaleParams {
  MscaleConfig config;
  std::vector<MlpParams> subnets;
  ad::Tensor combo_w;  // [n_subnets x 1]
  ad::Tensor combo_b;  // 1x1
};

// Deep BSDE trainables: (Y0, Z0) plus one gradient sub-network per interior
// time station. Sub-networks map x (d inputs) to an approximation of
// grad u (d outputs).
struct BsdeStackParams {
  MlpConfig subnet;
  int n_steps = 0;  // N; holds N-1 sub-networks
  ad::Tensor y0;    // 1x1
  ad::Tensor z0;    // d x 1
  std::vector<MlpParams> subnets;
};

// Glorot-uniform weights with bound sqrt(6/(fan_in+fan_out)), zero biases.
// Deterministic in (config, seed) and independent of memory layout.
MlpParams init_mlp(const MlpConfig& config, uint64_t seed);
MscaleParams init_mscale(const MscaleConfig& config, uint64_t seed);
BsdeStackParams init_bsde_stack(const MlpConfig& subnet, int n_steps,
                                uint64_t seed);

// --- tape evaluation -------------------------------------------------------

struct MlpBinding {
  const MlpConfig* config = nullptr;
  std::vector<ad::AdValue> weights;
  std::vector<ad::AdValue> biases;
};

struct MscaleBinding {
  const MscaleConfig* config = nullptr;
  std::vector<MlpBinding> subnets;
  ad::AdValue combo_w;
  ad::AdValue combo_b;
};

// Record parameters on a tape. Trainable bindings become leaves (gradient
// targets); frozen ones become constants.
MlpBinding bind_mlp(ad::Tape& tape, const MlpParams& params, bool trainable);
MscaleBinding bind_mscale(ad::Tape& tape, const MscaleParams& params,
                          bool trainable);
std::vector<ad::AdValue> binding_leaves(const MlpBinding& b);
std::vector<ad::AdValue> binding_leaves(const MscaleBinding& b);

// Batched forward through a bound network; input [m x input_dim].
ad::AdValue mlp_apply(ad::Tape& tape, const MlpBinding& b, ad::AdValue input);
ad::AdValue mscale_apply(ad::Tape& tape, const MscaleBinding& b,
                         ad::AdValue input);

// Batched u and spatial gradient at one time station. X is path data
// [m x d]; the returned u is [m x 1] and z is [m x d], both differentiable
// with respect to the bound parameters. The time component of the input
// gradient is discarded.
std::pair<ad::AdValue, ad::AdValue> ugrad_batch(ad::Tape& tape,
                                                const MlpBinding& b, double t,
                                                const ad::Tensor& x);
std::pair<ad::AdValue, ad::AdValue> ugrad_batch(ad::Tape& tape,
                                                const MscaleBinding& b,
                                                double t, const ad::Tensor& x);
ad::AdValue u_batch(ad::Tape& tape, const MlpBinding& b, double t,
                    const ad::Tensor& x);
ad::AdValue u_batch(ad::Tape& tape, const MscaleBinding& b, double t,
                    const ad::Tensor& x);

// Stations stacked row-wise into one evaluation: input [(k*m) x (1+d)],
// outputs u [(k*m) x 1] and z [(k*m) x d]. Rows stay independent, so the
// per-station values are identical to k separate evaluations; one large
// evaluation just amortizes the sweep cost.
ad::Tensor stacked_station_input(std::span<const double> ts,
                                 std::span<const ad::Tensor* const> xs);
std::pair<ad::AdValue, ad::AdValue> ugrad_stacked(
    ad::Tape& tape, const MlpBinding& b, std::span<const double> ts,
    std::span<const ad::Tensor* const> xs);
std::pair<ad::AdValue, ad::AdValue> ugrad_stacked(
    ad::Tape& tape, const MscaleBinding& b, std::span<const double> ts,
    std::span<const ad::Tensor* const> xs);

// --- single-point evaluation ----------------------------------------------

ad::AdValue mlp_eval(ad::Tape& tape, const MlpParams& params, double t,
                     std::span<const double> x);
std::pair<ad::AdValue, ad::AdValue> mlp_eval_with_spatial_grad(
    ad::Tape& tape, const MlpParams& params, double t,
    std::span<const double> x);
ad::AdValue mscale_eval(ad::Tape& tape, const MscaleParams& params, double t,
                        std::span<const double> x);
std::pair<ad::AdValue, ad::AdValue> mscale_eval_with_spatial_grad(
    ad::Tape& tape, const MscaleParams& params, double t,
    std::span<const double> x);

// --- tape-free forward for post-training evaluation ------------------------

// u values at one station for a batch of states; identical arithmetic to the
// tape path (same kernels in the same order).
std::vector<double> mlp_values(const MlpParams& params, double t,
                               const ad::Tensor& x);
std::vector<double> mscale_values(const MscaleParams& params, double t,
                                  const ad::Tensor& x);

// --- presets ---------------------------------------------------------------

// "paper-fc"  : 5 hidden layers x 256, sine
// "paper-ms4" : 4 subnets, 5 hidden layers x 64, time scales 1,3,9,27
// "desk-fc"   : 4 hidden layers x 64, sine
// "desk-ms4"  : 4 subnets, 4 hidden layers x 32, time scales 1,3,9,27
bool is_mscale_preset(const std::string& name);
MlpConfig mlp_preset(const std::string& name, int dim);
MscaleConfig mscale_preset(const std::string& name, int dim);

}  // namespace fbsde::nets
