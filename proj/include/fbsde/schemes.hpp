#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "fbsde/model.hpp"
#include "fbsde/problems.hpp"
#include "fbsde/simulate.hpp"

namespace fbsde::schemes {

enum class SchemeKind { kDeepBsde, kS1, kS2, kS3 };

const char* scheme_name(SchemeKind kind);
SchemeKind scheme_from_name(const std::string& name);

struct SchemeConfig {
  SchemeKind scheme = SchemeKind::kS2;
  int n_steps = 12;
  int batch = 100;
  double beta1 = 0.02;
  double beta2 = 0.02;
  const problems::ProblemDefinition* problem = nullptr;
  sim::TimeGrid grid;
  // The printed branch-2 X update of Scheme 3 evaluates the diffusion at
  // branch-1 arguments; this switches to branch-2 arguments instead. The
  // two readings coincide for decoupled problems.
  bool s3_sigma_branch2 = false;

  void validate() const;
};

struct LossBreakdown {
  double pathwise = 0.0;
  double terminal_value = 0.0;
  double terminal_grad = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double total = 0.0;
  ad::AdValue total_node;  // differentiable total on the assembly tape
};

// u_theta and grad_x u_theta at one time station of constant path data.
// Bind once per tape, then evaluate; leaves() lists the gradient targets
// recorded by the last bind (empty for frozen or closed-form models).
class UModel {
 public:
  virtual ~UModel() = default;
  virtual int dim() const = 0;
  virtual void bind(ad::Tape& tape, bool trainable) = 0;
  virtual std::span<const ad::AdValue> leaves() const = 0;
  // u [m x 1]
  virtual ad::AdValue eval_u(ad::Tape& tape, double t,
                             const ad::Tensor& x) = 0;
  // (u [m x 1], z [m x d])
  virtual std::pair<ad::AdValue, ad::AdValue> eval_u_grad(
      ad::Tape& tape, double t, const ad::Tensor& x) = 0;
  // one (u, z) pair per station; network models stack stations into a few
  // large evaluations, which is what makes the training loop fast
  virtual std::vector<std::pair<ad::AdValue, ad::AdValue>> eval_u_grad_many(
      ad::Tape& tape, std::span<const double> ts,
      std::span<const ad::Tensor* const> xs);
  // tape-free u values for post-training evaluation
  virtual std::vector<double> values(double t, const ad::Tensor& x) const = 0;
};

class MlpUModel : public UModel {
 public:
  explicit MlpUModel(nets::MlpParams& params) : params_(&params) {}
  int dim() const override { return params_->config.input_dim - 1; }
  void bind(ad::Tape& tape, bool trainable) override;
  std::span<const ad::AdValue> leaves() const override { return leaves_; }
  ad::AdValue eval_u(ad::Tape& tape, double t, const ad::Tensor& x) override;
  std::pair<ad::AdValue, ad::AdValue> eval_u_grad(
      ad::Tape& tape, double t, const ad::Tensor& x) override;
  std::vector<std::pair<ad::AdValue, ad::AdValue>> eval_u_grad_many(
      ad::Tape& tape, std::span<const double> ts,
      std::span<const ad::Tensor* const> xs) override;
  std::vector<double> values(double t, const ad::Tensor& x) const override;

 private:
  nets::MlpParams* params_;
  nets::MlpBinding binding_;
  std::vector<ad::AdValue> leaves_;
};

class MscaleUModel : public UModel {
 public:
  explicit MscaleUModel(nets::MscaleParams& params) : params_(&params) {}
  int dim() const override {
    return params_->config.subnet.input_dim - 1;
  }
  void bind(ad::Tape& tape, bool trainable) override;
  std::span<const ad::AdValue> leaves() const override { return leaves_; }
  ad::AdValue eval_u(ad::Tape& tape, double t, const ad::Tensor& x) override;
  std::pair<ad::AdValue, ad::AdValue> eval_u_grad(
      ad::Tape& tape, double t, const ad::Tensor& x) override;
  std::vector<std::pair<ad::AdValue, ad::AdValue>> eval_u_grad_many(
      ad::Tape& tape, std::span<const double> ts,
      std::span<const ad::Tensor* const> xs) override;
  std::vector<double> values(double t, const ad::Tensor& x) const override;

 private:
  nets::MscaleParams* params_;
  nets::MscaleBinding binding_;
  std::vector<ad::AdValue> leaves_;
};

// Closed-form solution wrapped as a model; evaluations enter tapes as
// constants. Used by the consistency oracles.
class ExactUModel : public UModel {
 public:
  explicit ExactUModel(const problems::ProblemDefinition& problem);
  int dim() const override { return problem_->dim; }
  void bind(ad::Tape&, bool) override {}
  std::span<const ad::AdValue> leaves() const override { return {}; }
  ad::AdValue eval_u(ad::Tape& tape, double t, const ad::Tensor& x) override;
  std::pair<ad::AdValue, ad::AdValue> eval_u_grad(
      ad::Tape& tape, double t, const ad::Tensor& x) override;
  std::vector<double> values(double t, const ad::Tensor& x) const override;

 private:
  const problems::ProblemDefinition* problem_;
};

// Adapter for whichever architecture a Model holds (not the BSDE stack).
std::unique_ptr<UModel> make_u_model(nets::Model& model);

// Deep BSDE evaluation surface: trainable (Y0, Z0) plus a gradient field
// per interior station. The stack of sub-networks is the production
// implementation; oracle tests substitute closed-form gradients.
class DeepBsdeModel {
 public:
  virtual ~DeepBsdeModel() = default;
  virtual int dim() const = 0;
  virtual int n_steps() const = 0;
  virtual void bind(ad::Tape& tape, bool trainable) = 0;
  virtual std::span<const ad::AdValue> leaves() const = 0;
  virtual ad::AdValue y0() const = 0;
  virtual ad::AdValue z0() const = 0;
  // Z at interior station n (1 <= n <= N-1) for path states x [m x d].
  virtual ad::AdValue eval_z(ad::Tape& tape, int n, const ad::Tensor& x) = 0;
};

class BsdeStackModel : public DeepBsdeModel {
 public:
  explicit BsdeStackModel(nets::BsdeStackParams& params) : params_(&params) {}
  int dim() const override { return params_->subnet.input_dim; }
  int n_steps() const override { return params_->n_steps; }
  void bind(ad::Tape& tape, bool trainable) override;
  std::span<const ad::AdValue> leaves() const override { return leaves_; }
  ad::AdValue y0() const override { return y0_; }
  ad::AdValue z0() const override { return z0_; }
  ad::AdValue eval_z(ad::Tape& tape, int n, const ad::Tensor& x) override;

 private:
  nets::BsdeStackParams* params_;
  std::vector<nets::MlpBinding> bindings_;
  std::vector<ad::AdValue> leaves_;
  ad::AdValue y0_, z0_;
};

// The four differentiable losses. The model must be bound to `tape`
// beforehand; dw supplies the shared Brownian increments. Non-finite
// intermediate values raise NumericError carrying (path, station).
LossBreakdown scheme1_loss(UModel& model, const SchemeConfig& config,
                           const sim::IncrementBatch& dw, ad::Tape& tape);
LossBreakdown scheme2_loss(UModel& model, const SchemeConfig& config,
                           const sim::IncrementBatch& dw, ad::Tape& tape);
LossBreakdown scheme3_loss(UModel& model, const SchemeConfig& config,
                           const sim::IncrementBatch& dw, ad::Tape& tape);
LossBreakdown deep_bsde_loss(DeepBsdeModel& model, const SchemeConfig& config,
                             const sim::IncrementBatch& dw, ad::Tape& tape);

// Dispatch by config.scheme; `model` must match (UModel for s1/s2/s3).
LossBreakdown scheme_loss(SchemeKind kind, UModel& model,
                          const SchemeConfig& config,
                          const sim::IncrementBatch& dw, ad::Tape& tape);

}  // namespace fbsde::schemes
