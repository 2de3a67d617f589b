// Command-line front end; talks to the library exclusively through the
// C API in fbsde.h.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbsde.h"

namespace {

// exit codes: 0 ok, 2 config error, 3 numeric abort, 4 I/O error, 5 internal
int exit_code(fbsde_status status) {
  switch (status) {
    case FBSDE_OK:
      return 0;
    case FBSDE_ERR_CONFIG:
      return 2;
    case FBSDE_ERR_NUMERIC:
      return 3;
    case FBSDE_ERR_IO:
      return 4;
    default:
      return 5;
  }
}

int finish(fbsde_status status) {
  if (status != FBSDE_OK)
    std::fprintf(stderr, "error: %s\n", fbsde_last_error());
  return exit_code(status);
}

struct ConfigHandle {
  fbsde_config* ptr = nullptr;
  ~ConfigHandle() { fbsde_config_destroy(ptr); }
};

// shared options: --config file, then --set/--seed overrides in order
struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;
  std::string threads;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path,
                  "configuration file (key = value lines)");
  cmd->add_option("--set", opts.sets, "override a config key (key=value)")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", opts.seed, "override the run seed");
  cmd->add_option("--threads", opts.threads,
                  "kernel threads (0 = hardware)");
}

fbsde_status apply_common(fbsde_config* cfg, const CommonOpts& opts) {
  fbsde_status st = FBSDE_OK;
  if (!opts.config_path.empty()) {
    st = fbsde_config_load_file(cfg, opts.config_path.c_str());
    if (st != FBSDE_OK) return st;
  }
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return FBSDE_ERR_CONFIG;
    }
    st = fbsde_config_set(cfg, kv.substr(0, eq).c_str(),
                          kv.substr(eq + 1).c_str());
    if (st != FBSDE_OK) return st;
  }
  if (!opts.seed.empty()) {
    st = fbsde_config_set(cfg, "seed", opts.seed.c_str());
    if (st != FBSDE_OK) return st;
  }
  if (!opts.threads.empty()) {
    st = fbsde_config_set(cfg, "threads", opts.threads.c_str());
    if (st != FBSDE_OK) return st;
  }
  return FBSDE_OK;
}

std::vector<int> parse_n_list(const std::string& text, bool& ok) {
  std::vector<int> out;
  ok = true;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      ok = false;
      return out;
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("fbsde ") + fbsde_version() +
               " - FBSDE deep-solver experiments"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_opts, conv_opts, ms_opts, dump_opts;
  std::string train_out = "runs/train";
  auto* train = app.add_subcommand("train", "train the configured scheme");
  add_common(train, train_opts);
  train->add_option("-o,--out", train_out, "output directory");

  std::string eval_out = "runs/evaluate", eval_ckpt;
  bool eval_exact = false;
  auto* evaluate = app.add_subcommand(
      "evaluate", "relative-error report along verification paths");
  add_common(evaluate, eval_opts);
  evaluate->add_option("-o,--out", eval_out, "output directory");
  evaluate->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate");
  evaluate->add_flag("--exact", eval_exact,
                     "evaluate the closed-form solution instead");
  evaluate->add_option("--neighborhood-r", eval_opts.sets,
                       "shorthand for --set eval.neighborhood-r=R")
      ->each([&](const std::string& r) {
        eval_opts.sets.back() = "eval.neighborhood-r=" + r;
      });

  std::string conv_out = "runs/convergence", conv_nlist = "12,48";
  bool no_extrapolate = false;
  auto* convergence = app.add_subcommand(
      "convergence", "Y0 error table over a station-count ladder");
  add_common(convergence, conv_opts);
  convergence->add_option("-o,--out", conv_out, "output directory");
  convergence->add_option("--n-list", conv_nlist,
                          "comma-separated station counts");
  convergence->add_flag("--no-extrapolate", no_extrapolate,
                        "skip the extrapolated column");

  std::string ms_out = "runs/mscale-compare";
  auto* mscale = app.add_subcommand(
      "mscale-compare", "plain vs multiscale network on bsb-osc");
  add_common(mscale, ms_opts);
  mscale->add_option("-o,--out", ms_out, "output directory");

  std::string dump_out = "paths.csv", dump_ckpt;
  int dump_paths = 8;
  auto* dump = app.add_subcommand("paths-dump",
                                  "simulate and dump forward trajectories");
  add_common(dump, dump_opts);
  dump->add_option("-o,--out", dump_out, "output CSV file");
  dump->add_option("--checkpoint", dump_ckpt,
                   "fill Y, Z from this checkpoint");
  dump->add_option("--paths", dump_paths, "number of trajectories");

  CLI11_PARSE(app, argc, argv);

  ConfigHandle cfg;
  if (fbsde_status st = fbsde_config_create(&cfg.ptr); st != FBSDE_OK)
    return finish(st);

  if (train->parsed()) {
    if (fbsde_status st = apply_common(cfg.ptr, train_opts); st != FBSDE_OK)
      return finish(st);
    return finish(fbsde_run_train(cfg.ptr, train_out.c_str()));
  }
  if (evaluate->parsed()) {
    if (fbsde_status st = apply_common(cfg.ptr, eval_opts); st != FBSDE_OK)
      return finish(st);
    if (eval_exact) {
      if (fbsde_status st = fbsde_config_set(cfg.ptr, "eval.use-exact", "true");
          st != FBSDE_OK)
        return finish(st);
    }
    return finish(fbsde_run_evaluate(
        cfg.ptr, eval_ckpt.empty() ? nullptr : eval_ckpt.c_str(),
        eval_out.c_str()));
  }
  if (convergence->parsed()) {
    if (fbsde_status st = apply_common(cfg.ptr, conv_opts); st != FBSDE_OK)
      return finish(st);
    bool ok = false;
    const auto n_list = parse_n_list(conv_nlist, ok);
    if (!ok || n_list.empty()) {
      std::fprintf(stderr, "error: --n-list expects integers like 12,48\n");
      return 2;
    }
    return finish(fbsde_run_convergence(cfg.ptr, n_list.data(),
                                        (int)n_list.size(), !no_extrapolate,
                                        conv_out.c_str()));
  }
  if (mscale->parsed()) {
    if (fbsde_status st = apply_common(cfg.ptr, ms_opts); st != FBSDE_OK)
      return finish(st);
    return finish(fbsde_run_mscale_compare(cfg.ptr, ms_out.c_str()));
  }
  if (dump->parsed()) {
    if (fbsde_status st = apply_common(cfg.ptr, dump_opts); st != FBSDE_OK)
      return finish(st);
    return finish(fbsde_run_paths_dump(
        cfg.ptr, dump_ckpt.empty() ? nullptr : dump_ckpt.c_str(), dump_paths,
        dump_out.c_str()));
  }
  return 2;
}
