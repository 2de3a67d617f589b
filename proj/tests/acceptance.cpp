// Acceptance suite: one pass/fail line per criterion. Training runs are
// cached under the work directory so later criteria reuse earlier models.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fbsde/evaluation.hpp"
#include "fbsde/run_commands.hpp"

namespace fs = std::filesystem;
using namespace fbsde;

namespace {

struct Context {
  std::string workdir = "acceptance_work";
  std::string cli_path;
  std::vector<int> criteria;  // empty = all
};

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion,
              what.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------- shared

constexpr uint64_t kSeeds[3] = {101, 202, 303};

run::RunConfig desk_config(const char* scheme, uint64_t seed, int n_steps) {
  run::RunConfig cfg;
  cfg.set("preset", "desk-bsb");
  cfg.set("scheme", scheme);
  cfg.set("seed", std::to_string(seed));
  cfg.set("grid.steps", std::to_string(n_steps));
  return cfg;
}

// Y0 relative errors (raw per N, extrapolated for the 4x pair) of a cached
// desk convergence run; trains on first use.
std::vector<evaluation::ConvergenceRow> desk_pair(const Context& ctx,
                                                  const char* scheme,
                                                  uint64_t seed) {
  const fs::path dir = fs::path(ctx.workdir) /
                       (std::string("c4_") + scheme + "_s" +
                        std::to_string(seed));
  auto cfg = desk_config(scheme, seed, 12);
  const fs::path csv = dir / "convergence.csv";
  if (!fs::exists(csv)) {
    std::printf("  .. training desk pair scheme=%s seed=%llu\n", scheme,
                (unsigned long long)seed);
    std::fflush(stdout);
    run::cmd_convergence(cfg, {12, 48}, true, dir.string());
  }
  // parse the table back
  std::ifstream is(csv);
  std::vector<evaluation::ConvergenceRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'n') continue;
    evaluation::ConvergenceRow row;
    std::istringstream ls(line);
    std::string field;
    std::getline(ls, field, ',');
    row.n_steps = std::stoi(field);
    std::getline(ls, field, ',');
    row.raw_error = std::stod(field);
    if (std::getline(ls, field, ',') && !field.empty())
      row.extrapolated_error = std::stod(field);
    rows.push_back(row);
  }
  return rows;
}

nets::Model desk_checkpoint(const Context& ctx, const char* scheme,
                            uint64_t seed, int n_steps) {
  desk_pair(ctx, scheme, seed);  // ensure trained
  const fs::path ckpt = fs::path(ctx.workdir) /
                        (std::string("c4_") + scheme + "_s" +
                         std::to_string(seed)) /
                        ("n" + std::to_string(n_steps)) /
                        "checkpoint_final.fbck";
  return nets::load_checkpoint(ckpt.string());
}

// gradient vs central finite differences, relative to gradient magnitude
double grad_fd_deviation(const std::function<double()>& loss_value,
                         const std::vector<ad::Tensor*>& tensors,
                         const std::vector<ad::Tensor>& grads) {
  double max_mag = 1e-12, max_dev = 0.0;
  const double h = 1e-6;
  std::vector<std::vector<double>> fds(tensors.size());
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    ad::Tensor& t = *tensors[k];
    fds[k].resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double fp = loss_value();
      t.data()[i] = saved - h;
      const double fm = loss_value();
      t.data()[i] = saved;
      fds[k][i] = (fp - fm) / (2.0 * h);
      max_mag = std::max({max_mag, std::abs(fds[k][i]),
                          std::abs(grads[k].data()[i])});
    }
  }
  for (std::size_t k = 0; k < tensors.size(); ++k)
    for (std::size_t i = 0; i < fds[k].size(); ++i)
      max_dev = std::max(max_dev,
                         std::abs(grads[k].data()[i] - fds[k][i]) / max_mag);
  return max_dev;
}

// ------------------------------------------------------------ criterion 1

bool criterion1() {
  problems::BsbParams bp;
  bp.dim = 2;
  const auto problem = problems::make_bsb(bp);
  const int n_steps = 2, m = 2;

  schemes::SchemeConfig sc;
  sc.n_steps = n_steps;
  sc.batch = m;
  sc.problem = &problem;
  sc.grid = sim::TimeGrid(n_steps, problem.horizon);

  nets::MlpConfig ncfg;
  ncfg.input_dim = 3;
  ncfg.hidden_layers = 2;
  ncfg.hidden_width = 4;

  double worst = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    const auto dw = sim::sample_increments(
        m, sc.grid, 2, sim::RngStream::named(900 + instance, 1));
    for (auto kind : {schemes::SchemeKind::kS1, schemes::SchemeKind::kS2,
                      schemes::SchemeKind::kS3}) {
      auto params = nets::init_mlp(ncfg, 40 + instance);
      schemes::MlpUModel model(params);
      ad::Tape tape;
      model.bind(tape, true);
      const auto lb = schemes::scheme_loss(kind, model, sc, dw, tape);
      const auto grads = tape.grad_values(lb.total_node, model.leaves());
      std::vector<ad::Tensor*> tensors;
      for (std::size_t k = 0; k < params.weights.size(); ++k) {
        tensors.push_back(&params.weights[k]);
        tensors.push_back(&params.biases[k]);
      }
      auto value = [&] {
        ad::Tape t;
        model.bind(t, false);
        return schemes::scheme_loss(kind, model, sc, dw, t).total;
      };
      worst = std::max(worst, grad_fd_deviation(value, tensors, grads));
    }
    {
      nets::MlpConfig sub;
      sub.input_dim = 2;
      sub.hidden_layers = 1;
      sub.hidden_width = 4;
      sub.output_dim = 2;
      auto stack = nets::init_bsde_stack(sub, n_steps, 70 + instance);
      schemes::BsdeStackModel model(stack);
      ad::Tape tape;
      model.bind(tape, true);
      const auto lb = schemes::deep_bsde_loss(model, sc, dw, tape);
      const auto grads = tape.grad_values(lb.total_node, model.leaves());
      std::vector<ad::Tensor*> tensors = {&stack.y0, &stack.z0};
      for (auto& sn : stack.subnets)
        for (std::size_t k = 0; k < sn.weights.size(); ++k) {
          tensors.push_back(&sn.weights[k]);
          tensors.push_back(&sn.biases[k]);
        }
      auto value = [&] {
        ad::Tape t;
        model.bind(t, false);
        return schemes::deep_bsde_loss(model, sc, dw, t).total;
      };
      worst = std::max(worst, grad_fd_deviation(value, tensors, grads));
    }
  }
  const bool pass = worst < 1e-4;
  report(1, pass,
         "loss gradients match finite differences on 20 tiny instances "
         "per scheme",
         "max relative deviation " + fmt(worst));
  return pass;
}

// ------------------------------------------------------------ criterion 2

bool criterion2() {
  problems::BsbParams bp;
  bp.dim = 10;
  const auto problem = problems::make_bsb(bp);
  const int m = 2000, fine = 192;

  auto pathwise = [&](schemes::SchemeKind kind, int n) {
    schemes::SchemeConfig sc;
    sc.scheme = kind;
    sc.n_steps = n;
    sc.batch = m;
    sc.problem = &problem;
    sc.grid = sim::TimeGrid(n, problem.horizon);
    const auto dw = sim::sample_increments_coarse(
        m, sc.grid, 10, sim::RngStream::named(12, 2), fine / n);
    schemes::ExactUModel model(problem);
    ad::Tape tape;
    return schemes::scheme_loss(kind, model, sc, dw, tape).pathwise;
  };

  bool pass = true;
  std::string detail;
  for (auto kind : {schemes::SchemeKind::kS2, schemes::SchemeKind::kS3}) {
    const double e12 = pathwise(kind, 12);
    const double e48 = pathwise(kind, 48);
    const double e192 = pathwise(kind, 192);
    const double factor = e12 / e48;
    const bool mono = e12 > e48 && e48 > e192;
    const bool in_range = factor >= 2.5 && factor <= 6.0;
    pass = pass && mono && in_range;
    detail += std::string(kind == schemes::SchemeKind::kS2 ? "s2" : "s3") +
              ": " + fmt(e12) + " > " + fmt(e48) + " > " + fmt(e192) +
              ", 12->48 factor " + fmt(factor) + "  ";
  }
  report(2, pass,
         "exact-solution pathwise terms of schemes 2/3 decay "
         "monotonically with the 12->48 factor in [2.5, 6]",
         detail);
  return pass;
}

// ------------------------------------------------------------ criterion 3

bool criterion3() {
  problems::BsbParams bp;
  bp.dim = 10;
  const auto problem = problems::make_bsb(bp);
  const int m = 5000, fine = 768;
  const auto stream = sim::RngStream::named(3, 3);

  std::vector<double> logn, loge;
  for (int n : {12, 48, 192, 768}) {
    const sim::TimeGrid grid(n, problem.horizon);
    const auto dw =
        sim::sample_increments_coarse(m, grid, 10, stream, fine / n);
    const double dt = grid.dt();
    std::vector<double> x(10), xn(10), z(10);
    double acc = 0.0;
    for (int path = 0; path < m; ++path) {
      x = problem.x0;
      double y = problem.exact_u(0.0, x.data());
      for (int station = 0; station < n; ++station) {
        const double t = grid.t(station);
        problem.exact_grad_u(t, x.data(), z.data());
        std::span<const double> dwn(
            dw.station(station) + (std::size_t)path * 10, 10);
        y = sim::euler_y_step(problem, t, x, y, z, dwn, dt, path);
        sim::euler_x_step(problem, t, x, y, z, dwn, dt, xn, path);
        x.swap(xn);
      }
      acc += std::abs(y - problem.g(x.data()));
    }
    logn.push_back(std::log((double)n));
    loge.push_back(std::log(acc / m));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < logn.size(); ++i) {
    mx += logn[i];
    my += loge[i];
  }
  mx /= logn.size();
  my /= logn.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < logn.size(); ++i) {
    num += (logn[i] - mx) * (loge[i] - my);
    den += (logn[i] - mx) * (logn[i] - mx);
  }
  const double slope = num / den;
  const bool pass = slope >= -0.65 && slope <= -0.35;
  report(3, pass,
         "terminal Euler error of the exact-solution-driven recursion has "
         "strong order 1/2",
         "log-log slope " + fmt(slope) + " (target -0.5 +- 0.15)");
  return pass;
}

// ------------------------------------------------------------ criterion 4

bool criterion4(const Context& ctx) {
  bool pass = true;
  std::string detail;
  for (const char* scheme : {"s2", "s3"}) {
    int improved = 0;
    double worst = 0.0;
    for (uint64_t seed : kSeeds) {
      const auto rows = desk_pair(ctx, scheme, seed);
      const double e12 = rows.at(0).raw_error;
      const double e48 = rows.at(1).raw_error;
      if (e48 < e12) ++improved;
      worst = std::max({worst, e12, e48});
      detail += std::string(scheme) + "/s" + std::to_string(seed) + ": " +
                fmt(e12) + "->" + fmt(e48) + "  ";
    }
    const bool scheme_pass = worst <= 2e-2 && improved >= 2;
    pass = pass && scheme_pass;
    detail += std::string(scheme) + " improved " +
              std::to_string(improved) + "/3, worst " + fmt(worst) + "; ";
  }
  report(4, pass,
         "desk training reaches Y0 error <= 2e-2 and N=48 beats N=12 in "
         ">= 2 of 3 seeds for schemes 2 and 3",
         detail);
  return pass;
}

// ------------------------------------------------------------ criterion 5

bool criterion5(const Context& ctx) {
  // exact arithmetic
  bool pass = evaluation::richardson(2.0, 1.7) == 2.0 * 1.7 - 2.0 &&
              evaluation::richardson(0.5, 0.5) == 0.5;

  // synthetic ansatz with known constants: the half-order term vanishes
  const double u = 3.4, c1 = 0.7, c2 = 0.05;
  double worst_residual = 0.0;
  for (int n : {12, 48, 192}) {
    const double un = u + c1 / std::sqrt((double)n) + c2 / n;
    const double u4n = u + c1 / std::sqrt(4.0 * n) + c2 / (4.0 * n);
    const double got = evaluation::richardson(un, u4n);
    worst_residual =
        std::max(worst_residual, std::abs(got - (u - 0.5 * c2 / n)));
  }
  pass = pass && worst_residual <= 1e-12;

  // desk-trained pairs: extrapolation beats the N=48 raw error
  int improved = 0;
  std::string detail = "ansatz residual " + fmt(worst_residual) + "; ";
  for (uint64_t seed : kSeeds) {
    const auto rows = desk_pair(ctx, "s2", seed);
    const double raw48 = rows.at(1).raw_error;
    const double ex48 = rows.at(1).extrapolated_error.value();
    if (ex48 < raw48) ++improved;
    detail += "s" + std::to_string(seed) + ": raw " + fmt(raw48) + " ex " +
              fmt(ex48) + "  ";
  }
  pass = pass && improved >= 2;
  detail += "improved " + std::to_string(improved) + "/3";
  report(5, pass,
         "richardson(a,b) = 2b - a, removes the half-order ansatz term, "
         "and improves desk (12,48) pairs in >= 2 of 3 seeds",
         detail);
  return pass;
}

// ------------------------------------------------------------ criterion 6

bool criterion6(const Context& ctx) {
  int monotone = 0;
  bool r0_identical = true;
  std::string detail;
  for (uint64_t seed : kSeeds) {
    const auto model = desk_checkpoint(ctx, "s2", seed, 48);
    evaluation::ModelEvaluator evaluator(model);
    const auto problem = desk_config("s2", seed, 48).build_problem();

    const auto plain =
        evaluation::verify_relative_error(evaluator, problem, 1000, 1000,
                                          seed);
    const auto r0 =
        evaluation::neighborhood_study(evaluator, problem, 0.0, 1000, 1000,
                                       seed);
    const auto r25 =
        evaluation::neighborhood_study(evaluator, problem, 0.25, 1000, 1000,
                                       seed);
    const auto r50 =
        evaluation::neighborhood_study(evaluator, problem, 0.5, 1000, 1000,
                                       seed);

    r0_identical = r0_identical && r0.t == plain.t && r0.mean == plain.mean &&
                   r0.sd == plain.sd;
    if (plain.overall_max_mean <= r25.overall_max_mean &&
        r25.overall_max_mean <= r50.overall_max_mean)
      ++monotone;
    detail += "s" + std::to_string(seed) + ": " +
              fmt(plain.overall_max_mean) + " / " +
              fmt(r25.overall_max_mean) + " / " + fmt(r50.overall_max_mean) +
              "  ";
  }
  const bool pass = monotone >= 2 && r0_identical;
  detail += "monotone " + std::to_string(monotone) + "/3, R=0 identical " +
            (r0_identical ? "yes" : "NO");
  report(6, pass,
         "perturbed-start error is non-decreasing in R for the majority "
         "of seeds and R=0 reproduces the unperturbed report",
         detail);
  return pass;
}

// ------------------------------------------------------------ criterion 7

struct CompareOutcome {
  double plain = 0.0;
  double mscale = 0.0;
};

CompareOutcome mscale_run(const Context& ctx, uint64_t seed, bool zero_alpha) {
  const fs::path dir = fs::path(ctx.workdir) /
                       (std::string("c7_") + (zero_alpha ? "a0" : "osc") +
                        "_s" + std::to_string(seed));
  run::RunConfig cfg;
  cfg.set("preset", "desk-bsb-osc");
  cfg.set("scheme", "s2");
  cfg.set("seed", std::to_string(seed));
  if (zero_alpha) cfg.set("problem.alpha", "0");
  cfg.set("eval.paths", "400");
  cfg.set("eval.fine-steps", "500");

  const fs::path meta = dir / "run_meta.json";
  if (!fs::exists(meta)) {
    std::printf("  .. training mscale pair alpha%s seed=%llu\n",
                zero_alpha ? "=0" : ">0", (unsigned long long)seed);
    std::fflush(stdout);
    run::cmd_mscale_compare(cfg, dir.string());
  }
  std::ifstream is(dir / "compare.csv");
  std::string line;
  std::getline(is, line);  // stamp
  std::getline(is, line);  // summary comment
  CompareOutcome out;
  std::sscanf(line.c_str(),
              "# plain_overall_max_mean=%lf mscale_overall_max_mean=%lf",
              &out.plain, &out.mscale);
  return out;
}

bool criterion7(const Context& ctx) {
  int ms_wins = 0;
  std::string detail;
  std::vector<double> gaps_zero;
  for (uint64_t seed : kSeeds) {
    const auto osc = mscale_run(ctx, seed, false);
    if (osc.mscale <= osc.plain) ++ms_wins;
    detail += "s" + std::to_string(seed) + ": plain " + fmt(osc.plain) +
              " ms " + fmt(osc.mscale) + "  ";
  }
  for (uint64_t seed : kSeeds) {
    const auto zero = mscale_run(ctx, seed, true);
    gaps_zero.push_back(zero.plain - zero.mscale);
  }
  double gm = 0.0;
  for (double g : gaps_zero) gm += g;
  gm /= gaps_zero.size();
  double gv = 0.0;
  for (double g : gaps_zero) gv += (g - gm) * (g - gm);
  const double gsd = std::sqrt(gv / (gaps_zero.size() - 1));
  const bool zero_indistinct = std::abs(gm) <= gsd;

  const bool pass = ms_wins >= 2 && zero_indistinct;
  detail += "ms wins " + std::to_string(ms_wins) + "/3; alpha=0 gap " +
            fmt(gm) + " (sd " + fmt(gsd) + ")";
  report(7, pass,
         "multiscale net matches or beats the plain net on the oscillatory "
         "desk preset in >= 2 of 3 seeds; no significant gap at alpha=0",
         detail);
  return pass;
}

// ------------------------------------------------------------ criterion 8

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

bool criterion8(const Context& ctx) {
  bool cli_identical = true;
  std::string detail;
  if (ctx.cli_path.empty()) {
    detail = "no --cli path given, CLI rerun check skipped; ";
    cli_identical = false;
  } else {
    const fs::path base = fs::path(ctx.workdir) / "c8";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string common =
        "\"" + ctx.cli_path +
        "\" train --set preset=desk-bsb --set schedule=1e-3:40 --set "
        "grid.steps=4 --set batch=8 --set net.width=16 --set net.depth=2 "
        "--seed 11 -o ";
    for (const char* tag : {"a", "b"}) {
      const std::string cmd = common + (base / tag).string() + " > " +
                              (base / (std::string(tag) + ".log")).string() +
                              " 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        detail += "CLI run failed; ";
        cli_identical = false;
        break;
      }
    }
    if (cli_identical) {
      cli_identical =
          slurp(base / "a" / "loss_history.csv") ==
              slurp(base / "b" / "loss_history.csv") &&
          !slurp(base / "a" / "loss_history.csv").empty() &&
          slurp(base / "a" / "checkpoint_final.fbck") ==
              slurp(base / "b" / "checkpoint_final.fbck");
      detail += std::string("CLI reruns byte-identical: ") +
                (cli_identical ? "yes" : "NO") + "; ";
    }
  }

  // parallel vs sequential loss evaluation
  problems::BsbParams bp;
  bp.dim = 10;
  const auto problem = problems::make_bsb(bp);
  nets::MlpConfig ncfg;
  ncfg.input_dim = 11;
  ncfg.hidden_layers = 4;
  ncfg.hidden_width = 64;
  auto params = nets::init_mlp(ncfg, 8);
  schemes::MlpUModel model(params);
  schemes::SchemeConfig sc;
  sc.n_steps = 12;
  sc.batch = 64;
  sc.problem = &problem;
  sc.grid = sim::TimeGrid(12, problem.horizon);
  const auto dw =
      sim::sample_increments(64, sc.grid, 10, sim::RngStream::named(8, 8));

  ad::set_kernel_threads(1);
  ad::Tape t1;
  model.bind(t1, true);
  const auto l1 = schemes::scheme2_loss(model, sc, dw, t1);
  const auto g1 = t1.grad_values(l1.total_node, model.leaves());
  ad::set_kernel_threads(2);
  ad::Tape t2;
  model.bind(t2, true);
  const auto l2 = schemes::scheme2_loss(model, sc, dw, t2);
  const auto g2 = t2.grad_values(l2.total_node, model.leaves());
  ad::set_kernel_threads(1);

  double worst = std::abs(l1.total - l2.total) /
                 (std::abs(l1.total) + std::abs(l2.total) + 1e-300);
  for (std::size_t k = 0; k < g1.size(); ++k)
    for (std::size_t i = 0; i < g1[k].size(); ++i) {
      const double a = g1[k].data()[i], b = g2[k].data()[i];
      worst = std::max(worst,
                       std::abs(a - b) / (std::abs(a) + std::abs(b) + 1e-300));
    }
  const bool parallel_ok = worst <= 1e-12;
  detail += "parallel vs sequential relative gap " + fmt(worst);

  const bool pass = cli_identical && parallel_ok;
  report(8, pass,
         "reruns are byte-identical and parallel evaluation matches "
         "sequential to 1e-12",
         detail);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::fprintf(stderr, "missing value for %s\n", arg.c_str());
        std::exit(2);
      }
      return argv[++i];
    };
    if (arg == "--workdir") {
      ctx.workdir = next();
    } else if (arg == "--cli") {
      ctx.cli_path = next();
    } else if (arg == "--criterion") {
      ctx.criteria.push_back(std::stoi(next()));
    } else {
      std::fprintf(stderr,
                   "usage: fbsde_acceptance [--workdir DIR] [--cli PATH] "
                   "[--criterion K]...\n");
      return 2;
    }
  }
  fs::create_directories(ctx.workdir);

  auto want = [&](int k) {
    return ctx.criteria.empty() ||
           std::find(ctx.criteria.begin(), ctx.criteria.end(), k) !=
               ctx.criteria.end();
  };

  if (want(1)) criterion1();
  if (want(2)) criterion2();
  if (want(3)) criterion3();
  if (want(4)) criterion4(ctx);
  if (want(5)) criterion5(ctx);
  if (want(6)) criterion6(ctx);
  if (want(7)) criterion7(ctx);
  if (want(8)) criterion8(ctx);

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all requested criteria passed\n");
  return 0;
}
