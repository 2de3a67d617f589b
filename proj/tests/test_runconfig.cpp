#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fbsde/errors.hpp"
#include "fbsde/runconfig.hpp"

using namespace fbsde;
using fbsde::run::RunConfig;

TEST_CASE("defaults follow the paper protocol") {
  RunConfig cfg;
  CHECK(cfg.get("problem") == "bsb");
  CHECK(cfg.get("problem.dim") == "100");
  CHECK(cfg.get("problem.sigma") == "0.4");
  CHECK(cfg.get("problem.rate") == "0.05");
  CHECK(cfg.get("batch") == "100");
  CHECK(cfg.get("beta1") == "0.02");
  CHECK(cfg.get("beta2") == "0.02");
  CHECK(cfg.get("net") == "paper-fc");
  CHECK(cfg.schedule().total_steps() == 50000);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("paper preset metadata: network and schedule") {
  RunConfig cfg;
  cfg.set("preset", "paper-bsb");
  const auto model = cfg.build_model();
  REQUIRE(model.kind == nets::ModelKind::kMlp);
  CHECK(model.mlp.config.hidden_layers == 5);
  CHECK(model.mlp.config.hidden_width == 256);
  CHECK(model.mlp.config.input_dim == 101);
  CHECK(model.mlp.config.activation == nets::Activation::kSine);
  CHECK(cfg.batch() == 100);
  const auto sched = cfg.schedule();
  REQUIRE(sched.stages.size() == 5);
  CHECK(sched.stages[0].lr == 1e-3);
  CHECK(sched.stages[4].lr == 1e-7);
  CHECK(sched.stages[0].steps == 10000);
}

TEST_CASE("desk preset bundles the scaled-down protocol") {
  RunConfig cfg;
  cfg.set("preset", "desk-bsb");
  CHECK(cfg.get("problem.dim") == "10");
  const auto model = cfg.build_model();
  CHECK(model.mlp.config.hidden_layers == 4);
  CHECK(model.mlp.config.hidden_width == 64);
  CHECK(cfg.schedule().total_steps() == 3000);

  RunConfig osc;
  osc.set("preset", "desk-bsb-osc");
  CHECK(osc.get("problem") == "bsb-osc");
  CHECK(osc.get("problem.gamma") == "8");
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("betta1", "0.02"), ConfigError);
  CHECK_THROWS_AS(cfg.set("preset", "giant"), ConfigError);
  cfg.set("beta1", "-0.5");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.set("beta1", "abc");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("file parsing: comments, spacing, unknown keys") {
  const auto cfg = RunConfig::from_text(
      "# experiment\n"
      "preset = desk-bsb\n"
      "scheme = s3   # comment after value\n"
      "\n"
      "seed=42\n");
  CHECK(cfg.get("scheme") == "s3");
  CHECK(cfg.seed() == 42);
  CHECK(cfg.get("problem.dim") == "10");

  CHECK_THROWS_AS(RunConfig::from_text("bogus-key = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("no equals sign\n"), ConfigError);
}

TEST_CASE("hash covers every effective key") {
  RunConfig a, b;
  CHECK(a.hash() == b.hash());
  b.set("seed", "2");
  CHECK(a.hash() != b.hash());
  b.set("seed", "1");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash_hex().size() == 16);
}

TEST_CASE("mscale preset builds the four time-scaled subnets") {
  RunConfig cfg;
  cfg.set("preset", "desk-bsb-osc");
  cfg.set("net", "desk-ms4");
  const auto model = cfg.build_model();
  REQUIRE(model.kind == nets::ModelKind::kMscale);
  REQUIRE(model.mscale.config.n_subnets() == 4);
  for (int i = 0; i < 4; ++i) {
    const auto& s = model.mscale.config.scales[i];
    CHECK(s[0] == doctest::Approx(std::pow(3.0, i)));
    for (std::size_t j = 1; j < s.size(); ++j) CHECK(s[j] == 1.0);
  }
  CHECK(model.mscale.config.subnet.hidden_width == 32);
}

TEST_CASE("deep-bsde models mirror the main network shape") {
  RunConfig cfg;
  cfg.set("preset", "desk-bsb");
  cfg.set("scheme", "deep-bsde");
  cfg.set("grid.steps", "6");
  const auto model = cfg.build_model();
  REQUIRE(model.kind == nets::ModelKind::kBsdeStack);
  CHECK(model.bsde.n_steps == 6);
  CHECK((int)model.bsde.subnets.size() == 5);
  CHECK(model.bsde.subnet.input_dim == 10);
  CHECK(model.bsde.subnet.output_dim == 10);
  CHECK(model.bsde.subnet.hidden_width == 64);

  cfg.set("net", "desk-ms4");
  CHECK_THROWS_AS(cfg.build_model(), ConfigError);
}

TEST_CASE("net overrides apply on top of presets") {
  RunConfig cfg;
  cfg.set("preset", "desk-bsb");
  cfg.set("net.width", "16");
  cfg.set("net.depth", "2");
  const auto model = cfg.build_model();
  CHECK(model.mlp.config.hidden_width == 16);
  CHECK(model.mlp.config.hidden_layers == 2);
}
