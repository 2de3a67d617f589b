#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fbsde/evaluation.hpp"
#include "fbsde/runconfig.hpp"

namespace fbsde::run {

struct TrainSummary {
  std::string checkpoint_path;
  std::string loss_csv_path;
  std::string metadata_path;
  double final_total = 0.0;
  std::optional<double> y0_rel_error;
  bool aborted = false;
};

// train: run the configured scheme, drop checkpoint + loss log + metadata
// into out_dir.
TrainSummary cmd_train(const RunConfig& config, const std::string& out_dir);

// evaluate: relative-error report of a checkpoint (or of the closed form
// when checkpoint_path is empty / eval.use-exact) along fresh verification
// paths; neighborhood variant when eval.neighborhood-r > 0.
struct EvaluateSummary {
  std::string csv_path;
  std::string svg_path;
  double overall_max_mean = 0.0;
  double y0_rel_error = 0.0;
};
EvaluateSummary cmd_evaluate(const RunConfig& config,
                             const std::string& checkpoint_path,
                             const std::string& out_dir);

// convergence: train per-N models on coupled noise, emit the Y0 error
// table (with the extrapolated column when requested).
struct ConvergenceSummary {
  std::string csv_path;
  std::vector<evaluation::ConvergenceRow> rows;
};
ConvergenceSummary cmd_convergence(const RunConfig& config,
                                   const std::vector<int>& n_list,
                                   bool extrapolate,
                                   const std::string& out_dir);

// mscale-compare: plain vs multiscale network on the oscillatory problem,
// same seed and noise, side-by-side error reports.
struct MscaleCompareSummary {
  std::string csv_path;
  std::string svg_path;
  double plain_overall_max_mean = 0.0;
  double mscale_overall_max_mean = 0.0;
};
MscaleCompareSummary cmd_mscale_compare(const RunConfig& config,
                                        const std::string& out_dir);

// paths-dump: forward trajectories with Y, Z columns filled from a
// checkpoint, the closed form, or zeros.
std::string cmd_paths_dump(const RunConfig& config,
                           const std::string& checkpoint_path, int n_paths,
                           const std::string& out_csv);

}  // namespace fbsde::run
