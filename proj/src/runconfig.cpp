#include "fbsde/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fbsde/errors.hpp"

namespace fbsde::run {

namespace {

const std::vector<RunConfig::SchemaEntry>& schema_table() {
  static const std::vector<RunConfig::SchemaEntry> table = {
      {"preset", "",
       "bundle of defaults: desk-bsb | desk-bsb-osc | paper-bsb | "
       "paper-bsb-osc"},
      {"problem", "bsb", "bsb | bsb-osc"},
      {"problem.dim", "100", "state dimension d"},
      {"problem.horizon", "1.0", "terminal time T"},
      {"problem.rate", "0.05", "rate r"},
      {"problem.sigma", "0.4", "volatility"},
      {"problem.alpha", "0.025", "oscillation amplitude (bsb-osc)"},
      {"problem.beta", "0.25", "oscillation spatial factor (bsb-osc)"},
      {"problem.gamma", "32", "oscillation time frequency (bsb-osc)"},
      {"scheme", "s2", "s1 | s2 | s3 | deep-bsde"},
      {"scheme.s3-sigma-branch2", "false",
       "evaluate the branch-2 X-update diffusion at branch-2 arguments"},
      {"net", "paper-fc", "paper-fc | paper-ms4 | desk-fc | desk-ms4"},
      {"net.width", "", "override hidden width"},
      {"net.depth", "", "override hidden layer count"},
      {"net.activation", "sine", "sine | tanh"},
      {"grid.steps", "12", "time stations N"},
      {"grid.fine-factor", "1",
       "draw increments on a grid this many times finer and sum them"},
      {"batch", "100", "paths per training step M"},
      {"beta1", "0.02", "terminal value penalty"},
      {"beta2", "0.02", "terminal gradient penalty"},
      {"schedule", "paper", "paper | desk | list lr:steps,..."},
      {"seed", "1", "run seed"},
      {"threads", "1", "kernel threads (0 = hardware)"},
      {"checkpoint.every", "0",
       "checkpoint cadence in steps (0 = stage boundaries)"},
      {"eval.paths", "1000", "verification paths"},
      {"eval.fine-steps", "1000", "verification grid stations"},
      {"eval.neighborhood-r", "0",
       "half edge length of the perturbed-start cube"},
      {"eval.use-exact", "false",
       "evaluate the closed-form solution instead of a checkpoint"},
      {"eval.t-max", "0.1",
       "time window of the field-level extrapolation report"},
  };
  return table;
}

bool known_key(const std::string& key) {
  for (const auto& e : schema_table())
    if (e.key == key) return true;
  return false;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return (uint64_t)out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v +
                      "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace

const std::vector<RunConfig::SchemaEntry>& RunConfig::schema() {
  return schema_table();
}

RunConfig::RunConfig() {
  for (const auto& e : schema_table())
    if (!e.default_value.empty() || e.key == "preset")
      values_[e.key] = e.default_value;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::apply_preset(const std::string& name) {
  auto put = [&](const char* k, const char* v) { values_[k] = v; };
  if (name == "desk-bsb" || name == "desk-bsb-osc") {
    put("problem", name == "desk-bsb" ? "bsb" : "bsb-osc");
    put("problem.dim", "10");
    put("net", "desk-fc");
    put("grid.steps", "12");
    put("batch", "100");
    put("schedule", "desk");
    if (name == "desk-bsb-osc") {
      put("problem.gamma", "8");
      put("schedule", "1e-3:1000,1e-4:500");
    }
  } else if (name == "paper-bsb" || name == "paper-bsb-osc") {
    put("problem", name == "paper-bsb" ? "bsb" : "bsb-osc");
    put("problem.dim", "100");
    put("net", "paper-fc");
    put("grid.steps", "48");
    put("batch", "100");
    put("schedule", "paper");
  } else {
    throw ConfigError("preset: unknown preset '" + name + "'");
  }
  values_["preset"] = name;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known_key(key)) throw ConfigError("config: unknown key '" + key + "'");
  if (key == "preset") {
    apply_preset(value);
    return;
  }
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("config: key '" + key + "' is not set");
  return it->second;
}

uint64_t RunConfig::hash() const {
  uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& [k, v] : values_) {  // std::map iterates sorted
    for (const std::string* s : {&k, &v}) {
      for (char c : *s) {
        h ^= (unsigned char)c;
        h *= 0x100000001B3ull;
      }
      h ^= '\n';
      h *= 0x100000001B3ull;
    }
  }
  return h;
}

std::string RunConfig::hash_hex() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)hash());
  return buf;
}

std::string RunConfig::problem_name() const { return get("problem"); }

problems::ProblemDefinition RunConfig::build_problem() const {
  const std::string name = get("problem");
  problems::BsbParams base;
  base.dim = to_int("problem.dim", get("problem.dim"));
  base.horizon = to_double("problem.horizon", get("problem.horizon"));
  base.rate = to_double("problem.rate", get("problem.rate"));
  base.sigma = to_double("problem.sigma", get("problem.sigma"));
  if (name == "bsb") return problems::make_bsb(base);
  if (name == "bsb-osc") {
    problems::OscBsbParams op;
    op.base = base;
    op.alpha = to_double("problem.alpha", get("problem.alpha"));
    op.beta = to_double("problem.beta", get("problem.beta"));
    op.gamma = to_double("problem.gamma", get("problem.gamma"));
    return problems::make_osc_bsb(op);
  }
  throw ConfigError("problem: unknown problem '" + name + "'");
}

schemes::SchemeKind RunConfig::scheme() const {
  return schemes::scheme_from_name(get("scheme"));
}

bool RunConfig::s3_sigma_branch2() const {
  return to_bool("scheme.s3-sigma-branch2", get("scheme.s3-sigma-branch2"));
}

int RunConfig::grid_steps() const {
  return to_int("grid.steps", get("grid.steps"));
}

int RunConfig::fine_factor() const {
  return to_int("grid.fine-factor", get("grid.fine-factor"));
}

int RunConfig::batch() const { return to_int("batch", get("batch")); }
double RunConfig::beta1() const { return to_double("beta1", get("beta1")); }
double RunConfig::beta2() const { return to_double("beta2", get("beta2")); }
uint64_t RunConfig::seed() const { return to_u64("seed", get("seed")); }
int RunConfig::threads() const { return to_int("threads", get("threads")); }

int RunConfig::checkpoint_every() const {
  return to_int("checkpoint.every", get("checkpoint.every"));
}

training::TrainSchedule RunConfig::schedule() const {
  const std::string& s = get("schedule");
  if (s == "paper") return training::TrainSchedule::paper();
  if (s == "desk") return training::TrainSchedule::desk();
  return training::TrainSchedule::parse(s);
}

std::string RunConfig::net_name() const { return get("net"); }

nets::Model RunConfig::build_model() const {
  const int dim = to_int("problem.dim", get("problem.dim"));
  const std::string name = get("net");
  const auto activation = [&] {
    const std::string& a = get("net.activation");
    if (a == "sine") return nets::Activation::kSine;
    if (a == "tanh") return nets::Activation::kTanh;
    throw ConfigError("net.activation: expected sine or tanh, got '" + a +
                      "'");
  }();

  if (scheme() == schemes::SchemeKind::kDeepBsde) {
    if (nets::is_mscale_preset(name))
      throw ConfigError(
          "net: deep-bsde uses per-station sub-networks, not a multiscale "
          "ensemble");
    // sub-network shape mirrors the configured u-network by default
    nets::MlpConfig sub = nets::mlp_preset(name, dim);
    sub.input_dim = dim;
    sub.output_dim = dim;
    if (has("net.width") && !get("net.width").empty())
      sub.hidden_width = to_int("net.width", get("net.width"));
    if (has("net.depth") && !get("net.depth").empty())
      sub.hidden_layers = to_int("net.depth", get("net.depth"));
    sub.activation = activation;
    sub.validate();
    return nets::Model::make_bsde(
        nets::init_bsde_stack(sub, grid_steps(), seed()));
  }

  if (nets::is_mscale_preset(name)) {
    nets::MscaleConfig cfg = nets::mscale_preset(name, dim);
    if (has("net.width") && !get("net.width").empty())
      cfg.subnet.hidden_width = to_int("net.width", get("net.width"));
    if (has("net.depth") && !get("net.depth").empty())
      cfg.subnet.hidden_layers = to_int("net.depth", get("net.depth"));
    cfg.subnet.activation = activation;
    cfg.validate();
    return nets::Model::make_mscale(nets::init_mscale(cfg, seed()));
  }

  nets::MlpConfig cfg = nets::mlp_preset(name, dim);
  if (has("net.width") && !get("net.width").empty())
    cfg.hidden_width = to_int("net.width", get("net.width"));
  if (has("net.depth") && !get("net.depth").empty())
    cfg.hidden_layers = to_int("net.depth", get("net.depth"));
  cfg.activation = activation;
  cfg.validate();
  return nets::Model::make_mlp(nets::init_mlp(cfg, seed()));
}

int RunConfig::eval_paths() const {
  return to_int("eval.paths", get("eval.paths"));
}

int RunConfig::eval_fine_steps() const {
  return to_int("eval.fine-steps", get("eval.fine-steps"));
}

double RunConfig::eval_neighborhood_r() const {
  return to_double("eval.neighborhood-r", get("eval.neighborhood-r"));
}

bool RunConfig::eval_use_exact() const {
  return to_bool("eval.use-exact", get("eval.use-exact"));
}

double RunConfig::eval_t_max() const {
  return to_double("eval.t-max", get("eval.t-max"));
}

void RunConfig::validate() const {
  build_problem();
  (void)scheme();
  (void)s3_sigma_branch2();
  if (grid_steps() < 1) throw ConfigError("grid.steps: must be >= 1");
  if (fine_factor() < 1) throw ConfigError("grid.fine-factor: must be >= 1");
  if (batch() < 1) throw ConfigError("batch: must be >= 1");
  if (beta1() < 0.0) throw ConfigError("beta1: must be >= 0");
  if (beta2() < 0.0) throw ConfigError("beta2: must be >= 0");
  if (threads() < 0) throw ConfigError("threads: must be >= 0");
  if (checkpoint_every() < 0)
    throw ConfigError("checkpoint.every: must be >= 0");
  schedule().validate();
  build_model();
  if (eval_paths() < 1) throw ConfigError("eval.paths: must be >= 1");
  if (eval_fine_steps() < 1)
    throw ConfigError("eval.fine-steps: must be >= 1");
  if (eval_neighborhood_r() < 0.0)
    throw ConfigError("eval.neighborhood-r: must be >= 0");
  if (eval_t_max() < 0.0) throw ConfigError("eval.t-max: must be >= 0");
}

}  // namespace fbsde::run
