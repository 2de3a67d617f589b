#include "fbsde/run_commands.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fbsde/artifacts.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/version.hpp"

namespace fbsde::run {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

ArtifactStamp stamp_of(const RunConfig& config) {
  return ArtifactStamp{config.hash_hex(), config.seed()};
}

json config_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& [k, v] : config.entries()) j[k] = v;
  return j;
}

json base_metadata(const RunConfig& config, const char* command) {
  json meta;
  meta["command"] = command;
  meta["software_version"] = FBSDE_VERSION;
  meta["config_hash"] = config.hash_hex();
  meta["seed"] = config.seed();
  meta["config"] = config_json(config);
  meta["initialization"] = "glorot-uniform";
  meta["adam"] = {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};
  return meta;
}

void write_metadata(const std::string& path, const json& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write metadata: " + path);
  os << meta.dump(2) << "\n";
}

schemes::SchemeConfig scheme_config_for(
    const RunConfig& config, const problems::ProblemDefinition& problem) {
  schemes::SchemeConfig sc;
  sc.scheme = config.scheme();
  sc.n_steps = config.grid_steps();
  sc.batch = config.batch();
  sc.beta1 = config.beta1();
  sc.beta2 = config.beta2();
  sc.problem = &problem;
  sc.grid = sim::TimeGrid(config.grid_steps(), problem.horizon);
  sc.s3_sigma_branch2 = config.s3_sigma_branch2();
  return sc;
}

// the trained approximation of u(0, x0); deep-bsde reads its trainable Y0
double model_y0(const nets::Model& model,
                const problems::ProblemDefinition& problem) {
  if (model.kind == nets::ModelKind::kBsdeStack)
    return model.bsde.y0.value();
  ad::Tensor x0(1, problem.dim);
  for (int j = 0; j < problem.dim; ++j) x0(0, j) = problem.x0[j];
  const auto v = model.kind == nets::ModelKind::kMlp
                     ? nets::mlp_values(model.mlp, 0.0, x0)
                     : nets::mscale_values(model.mscale, 0.0, x0);
  return v[0];
}

training::TrainResult run_training(const RunConfig& config,
                                   const problems::ProblemDefinition& problem,
                                   nets::Model model,
                                   const std::string& out_dir,
                                   int fine_factor) {
  ad::set_kernel_threads(config.threads());
  const auto sc = scheme_config_for(config, problem);
  training::TrainOptions options;
  options.seed = config.seed();
  options.fine_factor = fine_factor;
  options.checkpoint_every = config.checkpoint_every();
  options.out_dir = out_dir;
  return training::train(std::move(model), sc, config.schedule(), options);
}

nets::Model load_model_checked(const RunConfig& config,
                               const std::string& checkpoint_path) {
  nets::Model model = nets::load_checkpoint(checkpoint_path);
  const nets::Model expected = config.build_model();
  if (model.arch_hash() != expected.arch_hash())
    throw ConfigError(
        "evaluate: checkpoint architecture does not match the configured "
        "network (hash mismatch)");
  return model;
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config, const std::string& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  const auto problem = config.build_problem();

  auto result = run_training(config, problem, config.build_model(), out_dir,
                             config.fine_factor());

  TrainSummary summary;
  summary.aborted = result.aborted;
  summary.loss_csv_path = (fs::path(out_dir) / "loss_history.csv").string();
  write_loss_csv(summary.loss_csv_path, result.history, stamp_of(config));

  summary.checkpoint_path =
      (fs::path(out_dir) / "checkpoint_final.fbck").string();
  nets::TrainState ts;
  ts.present = true;
  ts.step = result.adam.step;
  ts.first_moment = result.adam.first_moment;
  ts.second_moment = result.adam.second_moment;
  nets::save_checkpoint(summary.checkpoint_path, result.model, &ts);

  if (!result.history.empty()) summary.final_total = result.history.back().total;

  json meta = base_metadata(config, "train");
  meta["schedule"] = config.schedule().to_string();
  meta["total_steps"] = (long)config.schedule().total_steps();
  meta["steps_run"] = (long)result.history.size();
  meta["aborted"] = result.aborted;
  if (result.aborted) meta["abort_message"] = result.abort_message;
  meta["wall_clock_sec"] = result.wall_seconds;
  meta["parameter_count"] = result.model.parameter_count();
  meta["model_kind"] = result.model.kind_name();
  meta["arch_hash"] = result.model.arch_hash();
  if (problem.has_exact()) {
    const double exact = problem.exact_u(0.0, problem.x0.data());
    const double y0 = model_y0(result.model, problem);
    summary.y0_rel_error = std::abs(y0 - exact) / std::abs(exact);
    meta["y0"] = y0;
    meta["y0_exact"] = exact;
    meta["y0_rel_error"] = *summary.y0_rel_error;
  }
  if (result.model.kind == nets::ModelKind::kMscale) {
    json scales = json::array();
    for (const auto& s : result.model.mscale.config.scales)
      scales.push_back(s[0]);  // time-coordinate factors
    meta["time_scales"] = scales;
  }
  summary.metadata_path = (fs::path(out_dir) / "run_meta.json").string();
  write_metadata(summary.metadata_path, meta);

  if (result.aborted)
    throw NumericError("train: aborted: " + result.abort_message);
  return summary;
}

EvaluateSummary cmd_evaluate(const RunConfig& config,
                             const std::string& checkpoint_path,
                             const std::string& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  const auto problem = config.build_problem();
  ad::set_kernel_threads(config.threads());

  std::unique_ptr<evaluation::PointEvaluator> evaluator;
  nets::Model model;
  const bool use_exact = checkpoint_path.empty() || config.eval_use_exact();
  if (use_exact) {
    evaluator = std::make_unique<evaluation::ExactEvaluator>(problem);
  } else {
    model = load_model_checked(config, checkpoint_path);
    evaluator = std::make_unique<evaluation::ModelEvaluator>(model);
  }

  const double radius = config.eval_neighborhood_r();
  const auto report =
      radius > 0.0
          ? evaluation::neighborhood_study(*evaluator, problem, radius,
                                           config.eval_paths(),
                                           config.eval_fine_steps(),
                                           config.seed())
          : evaluation::verify_relative_error(*evaluator, problem,
                                              config.eval_paths(),
                                              config.eval_fine_steps(),
                                              config.seed());

  EvaluateSummary summary;
  summary.overall_max_mean = report.overall_max_mean;
  summary.y0_rel_error = report.y0_rel_error;
  summary.csv_path = (fs::path(out_dir) / "error_report.csv").string();
  write_error_report_csv(summary.csv_path, report, stamp_of(config));

  std::vector<double> m2sd(report.t.size());
  for (std::size_t n = 0; n < report.t.size(); ++n)
    m2sd[n] = report.mean_plus_2sd(n);
  summary.svg_path = (fs::path(out_dir) / "error_report.svg").string();
  write_svg_plot(summary.svg_path, "relative error along verification paths",
                 "t", "relative error",
                 {{"mean", report.t, report.mean},
                  {"mean + 2 SD", report.t, m2sd}},
                 true, stamp_of(config));

  json meta = base_metadata(config, "evaluate");
  meta["checkpoint"] = use_exact ? "(closed form)" : checkpoint_path;
  meta["neighborhood_r"] = radius;
  meta["overall_max_mean"] = report.overall_max_mean;
  meta["y0_rel_error"] = report.y0_rel_error;
  write_metadata((fs::path(out_dir) / "run_meta.json").string(), meta);
  return summary;
}

ConvergenceSummary cmd_convergence(const RunConfig& config,
                                   const std::vector<int>& n_list,
                                   bool extrapolate,
                                   const std::string& out_dir) {
  config.validate();
  if (n_list.empty()) throw ConfigError("convergence: empty N list");
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1])
      throw ConfigError("convergence: N list must be ascending");
    if (extrapolate && n_list[i] != 4 * n_list[i - 1])
      throw ConfigError(
          "convergence: extrapolation needs each N to be 4x the previous");
  }
  const int n_max = n_list.back();
  for (int n : n_list)
    if (n_max % n != 0)
      throw ConfigError(
          "convergence: every N must divide the largest N so runs share "
          "Brownian paths");

  ensure_dir(out_dir);
  const auto problem = config.build_problem();

  std::map<int, nets::Model> models;
  for (int n : n_list) {
    RunConfig per_n = config;
    per_n.set("grid.steps", std::to_string(n));
    const std::string sub = (fs::path(out_dir) / ("n" + std::to_string(n)))
                                .string();
    ensure_dir(sub);
    auto result = run_training(per_n, problem, per_n.build_model(), sub,
                               n_max / n);
    write_loss_csv((fs::path(sub) / "loss_history.csv").string(),
                   result.history, stamp_of(per_n));
    nets::save_checkpoint((fs::path(sub) / "checkpoint_final.fbck").string(),
                          result.model);
    if (result.aborted)
      throw NumericError("convergence: training aborted at N=" +
                         std::to_string(n) + ": " + result.abort_message);
    models.emplace(n, std::move(result.model));
  }

  ConvergenceSummary summary;
  summary.rows = evaluation::convergence_table(
      problem, n_list,
      [&](int n) { return model_y0(models.at(n), problem); }, extrapolate);
  summary.csv_path = (fs::path(out_dir) / "convergence.csv").string();
  write_convergence_csv(summary.csv_path, summary.rows, stamp_of(config));

  // per-N error curves along shared verification paths (u-models only;
  // the deep-bsde stack approximates just Y0)
  if (models.begin()->second.kind != nets::ModelKind::kBsdeStack) {
    // verification stations sit on a refinement of the training grids
    int fine_steps = config.eval_fine_steps();
    fine_steps = std::max(n_max, fine_steps - fine_steps % n_max);
    std::vector<PlotSeries> mean_series, band_series;
    std::map<int, evaluation::ErrorReport> reports;
    for (int n : n_list) {
      evaluation::ModelEvaluator evaluator(models.at(n));
      auto report = evaluation::verify_relative_error(
          evaluator, problem, config.eval_paths(), fine_steps, config.seed());
      write_error_report_csv(
          (fs::path(out_dir) / ("n" + std::to_string(n)) /
           "error_report.csv")
              .string(),
          report, stamp_of(config));
      std::vector<double> band(report.t.size());
      for (std::size_t k = 0; k < band.size(); ++k)
        band[k] = report.mean_plus_2sd(k);
      mean_series.push_back({"N=" + std::to_string(n), report.t, report.mean});
      band_series.push_back(
          {"N=" + std::to_string(n), report.t, std::move(band)});
      reports.emplace(n, std::move(report));
    }
    write_svg_plot((fs::path(out_dir) / "error_mean.svg").string(),
                   "mean relative error per N", "t", "relative error",
                   mean_series, true, stamp_of(config));
    write_svg_plot((fs::path(out_dir) / "error_mean_plus_2sd.svg").string(),
                   "mean + 2 SD relative error per N", "t", "relative error",
                   band_series, true, stamp_of(config));

    // field-level extrapolation of the largest 4x pair, restricted to the
    // early-time window where the shared-constant assumption holds
    if (extrapolate && n_list.size() >= 2) {
      const int n_coarse = n_list[n_list.size() - 2];
      evaluation::ModelEvaluator coarse(models.at(n_coarse));
      evaluation::ModelEvaluator fine(models.at(n_max));
      const auto field = evaluation::extrapolated_field_error(
          coarse, fine, problem, config.eval_paths(), fine_steps,
          config.eval_t_max(), config.seed());
      write_error_report_csv(
          (fs::path(out_dir) / "extrapolated_field.csv").string(), field,
          stamp_of(config));
    }
  }

  json meta = base_metadata(config, "convergence");
  meta["n_list"] = n_list;
  meta["extrapolate"] = extrapolate;
  json rows = json::array();
  for (const auto& row : summary.rows) {
    json r;
    r["n_steps"] = row.n_steps;
    r["raw_error"] = row.raw_error;
    if (row.extrapolated_error) r["extrapolated_error"] = *row.extrapolated_error;
    rows.push_back(r);
  }
  meta["rows"] = rows;
  write_metadata((fs::path(out_dir) / "run_meta.json").string(), meta);
  return summary;
}

MscaleCompareSummary cmd_mscale_compare(const RunConfig& config,
                                        const std::string& out_dir) {
  config.validate();
  if (config.problem_name() != "bsb-osc")
    throw ConfigError("mscale-compare: requires problem = bsb-osc");
  if (nets::is_mscale_preset(config.net_name()))
    throw ConfigError(
        "mscale-compare: config names the plain network; the multiscale "
        "counterpart is chosen automatically");
  ensure_dir(out_dir);
  const auto problem = config.build_problem();

  // the multiscale twin of the configured family, at matched budget
  RunConfig ms_config = config;
  ms_config.set("net",
                config.net_name() == "paper-fc" ? "paper-ms4" : "desk-ms4");

  evaluation::ErrorReport reports[2];
  const RunConfig* configs[2] = {&config, &ms_config};
  const char* names[2] = {"plain", "mscale"};
  for (int k = 0; k < 2; ++k) {
    const std::string sub = (fs::path(out_dir) / names[k]).string();
    ensure_dir(sub);
    auto result = run_training(*configs[k], problem,
                               configs[k]->build_model(), sub,
                               configs[k]->fine_factor());
    write_loss_csv((fs::path(sub) / "loss_history.csv").string(),
                   result.history, stamp_of(*configs[k]));
    nets::save_checkpoint((fs::path(sub) / "checkpoint_final.fbck").string(),
                          result.model);
    if (result.aborted)
      throw NumericError(std::string("mscale-compare: training aborted (") +
                         names[k] + "): " + result.abort_message);
    evaluation::ModelEvaluator evaluator(result.model);
    reports[k] = evaluation::verify_relative_error(
        evaluator, problem, config.eval_paths(), config.eval_fine_steps(),
        config.seed());
    write_error_report_csv((fs::path(sub) / "error_report.csv").string(),
                           reports[k], stamp_of(*configs[k]));
  }

  MscaleCompareSummary summary;
  summary.plain_overall_max_mean = reports[0].overall_max_mean;
  summary.mscale_overall_max_mean = reports[1].overall_max_mean;
  summary.csv_path = (fs::path(out_dir) / "compare.csv").string();
  write_compare_csv(summary.csv_path, reports[0], reports[1],
                    stamp_of(config));
  summary.svg_path = (fs::path(out_dir) / "compare.svg").string();
  write_svg_plot(summary.svg_path,
                 "plain vs multiscale relative error", "t", "relative error",
                 {{"plain mean", reports[0].t, reports[0].mean},
                  {"mscale mean", reports[1].t, reports[1].mean}},
                 true, stamp_of(config));

  json meta = base_metadata(config, "mscale-compare");
  meta["plain_overall_max_mean"] = summary.plain_overall_max_mean;
  meta["mscale_overall_max_mean"] = summary.mscale_overall_max_mean;
  json scales = json::array();
  for (const auto& s : ms_config.build_model().mscale.config.scales)
    scales.push_back(s[0]);
  meta["time_scales"] = scales;
  write_metadata((fs::path(out_dir) / "run_meta.json").string(), meta);
  return summary;
}

std::string cmd_paths_dump(const RunConfig& config,
                           const std::string& checkpoint_path, int n_paths,
                           const std::string& out_csv) {
  config.validate();
  if (n_paths < 1) throw ConfigError("paths-dump: n_paths must be >= 1");
  const auto problem = config.build_problem();
  ad::set_kernel_threads(config.threads());

  const sim::TimeGrid grid(config.eval_fine_steps(), problem.horizon);
  auto batch = sim::simulate_forward_only(
      problem, grid, n_paths, sim::RngStream::verification(config.seed()));

  // Y, Z columns: checkpoint if given, else the closed form, else zeros
  nets::Model model;
  std::unique_ptr<evaluation::PointEvaluator> evaluator;
  if (!checkpoint_path.empty()) {
    model = load_model_checked(config, checkpoint_path);
    evaluator = std::make_unique<evaluation::ModelEvaluator>(model);
  }
  const bool exact = !evaluator && problem.has_exact();

  std::vector<double> u;
  for (int n = 0; n <= batch.n_steps; ++n) {
    const double t = grid.t(n);
    ad::Tensor x(n_paths, problem.dim);
    for (int p = 0; p < n_paths; ++p)
      std::memcpy(x.row(p), batch.x_at(p, n),
                  problem.dim * sizeof(double));
    if (evaluator) {
      evaluator->values(t, x, u);
      for (int p = 0; p < n_paths; ++p) batch.y_at(p, n) = u[p];
      // network gradient per station
      ad::Tape tape;
      if (model.kind == nets::ModelKind::kMlp) {
        auto b = nets::bind_mlp(tape, model.mlp, false);
        auto [uv, z] = nets::ugrad_batch(tape, b, t, x);
        for (int p = 0; p < n_paths; ++p)
          for (int j = 0; j < problem.dim; ++j)
            batch.z_at(p, n)[j] = z.value()(p, j);
      } else {
        auto b = nets::bind_mscale(tape, model.mscale, false);
        auto [uv, z] = nets::ugrad_batch(tape, b, t, x);
        for (int p = 0; p < n_paths; ++p)
          for (int j = 0; j < problem.dim; ++j)
            batch.z_at(p, n)[j] = z.value()(p, j);
      }
    } else if (exact) {
      for (int p = 0; p < n_paths; ++p) {
        batch.y_at(p, n) = problem.exact_u(t, x.row(p));
        problem.exact_grad_u(t, x.row(p), batch.z_at(p, n));
      }
    }
  }

  std::ofstream os(out_csv, std::ios::binary);
  if (!os) throw IoError("paths-dump: cannot open " + out_csv);
  os << "# config_hash=" << config.hash_hex() << " seed=" << config.seed()
     << "\n";
  sim::dump_paths_csv(os, batch);
  if (!os) throw IoError("paths-dump: write failed: " + out_csv);
  return out_csv;
}

}  // namespace fbsde::run
