#include "fbsde/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fbsde/errors.hpp"

namespace fbsde::training {

AdamState AdamState::init_like(const std::vector<ad::Tensor*>& params) {
  AdamState s;
  for (const auto* p : params) {
    s.first_moment.emplace_back(p->rows(), p->cols());
    s.second_moment.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(const std::vector<ad::Tensor*>& params,
               const std::vector<ad::Tensor>& grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size())
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, (double)state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, (double)state.step);
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Tensor& p = *params[k];
    const ad::Tensor& g = grads[k];
    ad::Tensor& m = state.first_moment[k];
    ad::Tensor& v = state.second_moment[k];
    if (!p.same_shape(g) || !p.same_shape(m))
      throw ShapeError("adam_step: tensor shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = state.beta1 * m.data()[i] + (1.0 - state.beta1) * gi;
      v.data()[i] = state.beta2 * v.data()[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      p.data()[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

long TrainSchedule::total_steps() const {
  long n = 0;
  for (const auto& s : stages) n += s.steps;
  return n;
}

double TrainSchedule::lr_at(long step) const {
  long acc = 0;
  for (const auto& s : stages) {
    acc += s.steps;
    if (step < acc) return s.lr;
  }
  return stages.empty() ? 0.0 : stages.back().lr;
}

void TrainSchedule::validate() const {
  // an empty schedule is a valid no-op (zero scheduled steps)
  for (const auto& s : stages) {
    if (!(s.lr > 0.0)) throw ConfigError("schedule: learning rates must be > 0");
    if (s.steps < 1) throw ConfigError("schedule: stage steps must be >= 1");
  }
}

TrainSchedule TrainSchedule::paper() {
  TrainSchedule s;
  for (double lr : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) s.stages.push_back({lr, 10000});
  return s;
}

TrainSchedule TrainSchedule::desk() {
  TrainSchedule s;
  s.stages = {{1e-3, 1500}, {1e-4, 1500}};
  return s;
}

TrainSchedule TrainSchedule::parse(const std::string& spec) {
  TrainSchedule s;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    const std::size_t comma = spec.find(',', pos);
    const std::string item = spec.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const std::size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("schedule: expected lr:steps, got '" + item + "'");
    try {
      s.stages.push_back(
          {std::stod(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ConfigError("schedule: cannot parse '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  s.validate();
  return s;
}

std::string TrainSchedule::to_string() const {
  std::string out;
  char buf[64];
  for (const auto& s : stages) {
    if (!out.empty()) out += ',';
    std::snprintf(buf, sizeof buf, "%g:%d", s.lr, s.steps);
    out += buf;
  }
  return out;
}

namespace {

void maybe_checkpoint(const TrainOptions& options, const nets::Model& model,
                      const AdamState& adam, long step) {
  if (options.out_dir.empty()) return;
  nets::TrainState ts;
  ts.present = true;
  ts.step = step;
  ts.first_moment = adam.first_moment;
  ts.second_moment = adam.second_moment;
  char name[64];
  std::snprintf(name, sizeof name, "checkpoint_step%06ld.fbck", step);
  nets::save_checkpoint(
      (std::filesystem::path(options.out_dir) / name).string(), model, &ts);
}

}  // namespace

TrainResult train(nets::Model model, const schemes::SchemeConfig& config,
                  const TrainSchedule& schedule, const TrainOptions& options) {
  config.validate();
  schedule.validate();
  if (options.fine_factor < 1)
    throw ConfigError("train: fine_factor must be >= 1");

  const auto t_begin = std::chrono::steady_clock::now();

  TrainResult result;
  result.model = std::move(model);

  // The two loss entry points share everything below; pick one.
  std::unique_ptr<schemes::UModel> umodel;
  std::unique_ptr<schemes::BsdeStackModel> bsde_model;
  if (config.scheme == schemes::SchemeKind::kDeepBsde) {
    if (result.model.kind != nets::ModelKind::kBsdeStack)
      throw ConfigError("train: deep-bsde needs a deep-bsde model");
    bsde_model = std::make_unique<schemes::BsdeStackModel>(result.model.bsde);
  } else {
    umodel = schemes::make_u_model(result.model);
    if (umodel->dim() != config.problem->dim)
      throw ConfigError("train: network dimension does not match problem");
  }

  auto tensors = result.model.tensors();
  result.adam = AdamState::init_like(tensors);
  long start_step = 0;
  if (options.resume && options.resume->present) {
    if (options.resume->first_moment.size() != tensors.size())
      throw ConfigError("train: resume state does not match architecture");
    result.adam.first_moment = options.resume->first_moment;
    result.adam.second_moment = options.resume->second_moment;
    result.adam.step = options.resume->step;
    start_step = options.resume->step;
  }

  const long total = schedule.total_steps();
  result.history.reserve((std::size_t)(total - start_step));

  ad::Tape tape;
  std::vector<ad::AdValue> leaves;
  for (long step = start_step; step < total; ++step) {
    const double lr = schedule.lr_at(step);
    const auto stream =
        sim::RngStream::training(options.seed, (uint64_t)step);
    const auto dw = sim::sample_increments_coarse(
        config.batch, config.grid, config.problem->dim, stream,
        options.fine_factor);

    schemes::LossBreakdown lb;
    try {
      tape.reset();
      if (bsde_model) {
        bsde_model->bind(tape, true);
        lb = schemes::deep_bsde_loss(*bsde_model, config, dw, tape);
      } else {
        umodel->bind(tape, true);
        lb = schemes::scheme_loss(config.scheme, *umodel, config, dw, tape);
      }
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_step = step;
      result.abort_message = std::string(e.what()) + " (step " +
                             std::to_string(step) + ", path " +
                             std::to_string(e.path) + ", station " +
                             std::to_string(e.station) + ")";
      maybe_checkpoint(options, result.model, result.adam, step);
      break;
    }

    const auto model_leaves =
        bsde_model ? bsde_model->leaves() : umodel->leaves();
    leaves.assign(model_leaves.begin(), model_leaves.end());
    const auto grads = tape.grad_values(lb.total_node, leaves);
    adam_step(tensors, grads, result.adam, lr);

    HistoryRow row{step, lr, lb.pathwise, lb.terminal_value, lb.terminal_grad,
                   lb.total};
    result.history.push_back(row);
    if (options.on_step) options.on_step(row);

    const long done = step + 1;
    const bool stage_end = schedule.lr_at(done) != lr || done == total;
    if ((options.checkpoint_every > 0 && done % options.checkpoint_every == 0 &&
         done != total) ||
        (options.checkpoint_every == 0 && stage_end && done != total))
      maybe_checkpoint(options, result.model, result.adam, done);
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin)
          .count();
  return result;
}

}  // namespace fbsde::training
