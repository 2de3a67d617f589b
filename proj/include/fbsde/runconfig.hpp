#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fbsde/model.hpp"
#include "fbsde/problems.hpp"
#include "fbsde/schemes.hpp"
#include "fbsde/training.hpp"

namespace fbsde::run {

// Flat key = value experiment configuration. Unknown keys are rejected,
// values are type-checked against the schema, and the fully resolved map
// hashes into every artifact the run emits.
//
// Precedence: schema defaults < preset bundle < config file < overrides.
class RunConfig {
 public:
  RunConfig();  // schema defaults

  static RunConfig from_file(const std::string& path);
  // raw "key = value" lines
  static RunConfig from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  // Full cross-field validation; throws ConfigError with the field name.
  void validate() const;

  // FNV-1a over the canonical sorted key=value listing.
  uint64_t hash() const;
  std::string hash_hex() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  // typed accessors (validated)
  std::string problem_name() const;
  problems::ProblemDefinition build_problem() const;
  schemes::SchemeKind scheme() const;
  bool s3_sigma_branch2() const;
  int grid_steps() const;
  int fine_factor() const;
  int batch() const;
  double beta1() const;
  double beta2() const;
  uint64_t seed() const;
  int threads() const;
  int checkpoint_every() const;
  training::TrainSchedule schedule() const;
  std::string net_name() const;
  // Trainable model for this config (MLP, multiscale, or the deep-bsde
  // stack when scheme = deep-bsde), initialized from the run seed.
  nets::Model build_model() const;
  int eval_paths() const;
  int eval_fine_steps() const;
  double eval_neighborhood_r() const;
  bool eval_use_exact() const;
  double eval_t_max() const;

  // schema documentation: key, default, help
  struct SchemaEntry {
    std::string key;
    std::string default_value;
    std::string help;
  };
  static const std::vector<SchemaEntry>& schema();

 private:
  void apply_preset(const std::string& name);
  std::map<std::string, std::string> values_;
};

}  // namespace fbsde::run
