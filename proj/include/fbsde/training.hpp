#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fbsde/model.hpp"
#include "fbsde/schemes.hpp"

namespace fbsde::training {

// Standard Adam with bias correction; hyperparameters fixed at
// (0.9, 0.999, 1e-8) and recorded in run metadata.
struct AdamState {
  std::vector<ad::Tensor> first_moment;
  std::vector<ad::Tensor> second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init_like(const std::vector<ad::Tensor*>& params);
};

void adam_step(const std::vector<ad::Tensor*>& params,
               const std::vector<ad::Tensor>& grads, AdamState& state,
               double lr);

struct TrainStage {
  double lr = 0.0;
  int steps = 0;
};

struct TrainSchedule {
  std::vector<TrainStage> stages;

  long total_steps() const;
  double lr_at(long step) const;  // 0-based global step
  void validate() const;

  // learning rates 1e-3 .. 1e-7, 10000 steps each
  static TrainSchedule paper();
  // desk preset: (1e-3, 1e-4) x 1500
  static TrainSchedule desk();
  // "1e-3:1500,1e-4:1500"
  static TrainSchedule parse(const std::string& spec);
  std::string to_string() const;
};

struct HistoryRow {
  long step = 0;
  double lr = 0.0;
  double pathwise = 0.0;
  double terminal_value = 0.0;
  double terminal_grad = 0.0;
  double total = 0.0;
};

struct TrainOptions {
  uint64_t seed = 1;
  // coarse increments summed from a grid refined by this factor, so runs
  // that share a seed across N and fine_factor*N consume the same noise
  int fine_factor = 1;
  // checkpoint every k steps into out_dir (0 = stage boundaries only)
  int checkpoint_every = 0;
  std::string out_dir;  // empty: keep everything in memory
  std::function<void(const HistoryRow&)> on_step;
  // resume: start from this state instead of step 0
  const nets::TrainState* resume = nullptr;
};

struct TrainResult {
  nets::Model model;
  AdamState adam;
  std::vector<HistoryRow> history;
  bool aborted = false;
  long abort_step = -1;
  std::string abort_message;
  double wall_seconds = 0.0;
};

// Run the staged loop: per step draw fresh increments, assemble the
// configured scheme loss, take one Adam step. Pure function of
// (model, config, schedule, seed): reruns agree bitwise. A non-finite loss
// aborts the run, keeping the last good state.
TrainResult train(nets::Model model, const schemes::SchemeConfig& config,
                  const TrainSchedule& schedule, const TrainOptions& options);

}  // namespace fbsde::training
