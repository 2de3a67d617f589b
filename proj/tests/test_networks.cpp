#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/networks.hpp"

using namespace fbsde;
using namespace fbsde::nets;

namespace {

MlpConfig small_cfg(int d, int width = 6, int layers = 2) {
  MlpConfig cfg;
  cfg.input_dim = d + 1;
  cfg.hidden_layers = layers;
  cfg.hidden_width = width;
  return cfg;
}

bool tensors_equal(const ad::Tensor& a, const ad::Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("initialization is deterministic in (config, seed)") {
  auto cfg = small_cfg(3);
  auto p1 = init_mlp(cfg, 99);
  auto p2 = init_mlp(cfg, 99);
  auto p3 = init_mlp(cfg, 100);
  for (std::size_t k = 0; k < p1.weights.size(); ++k) {
    CHECK(tensors_equal(p1.weights[k], p2.weights[k]));
    CHECK(tensors_equal(p1.biases[k], p2.biases[k]));
  }
  CHECK_FALSE(tensors_equal(p1.weights[0], p3.weights[0]));
}

TEST_CASE("layer shapes chain") {
  MlpConfig cfg;
  cfg.input_dim = 5;  // d + 1 with d = 4
  cfg.hidden_layers = 1;
  cfg.hidden_width = 1;
  auto p = init_mlp(cfg, 1);
  REQUIRE(p.weights.size() == 2);
  CHECK(p.weights[0].rows() == 1);
  CHECK(p.weights[0].cols() == 5);
  CHECK(p.weights[1].rows() == 1);
  CHECK(p.weights[1].cols() == 1);
  CHECK(p.biases[0].rows() == 1);
  CHECK(p.biases[1].rows() == 1);
}

TEST_CASE("glorot draws respect the bound and fill it") {
  MlpConfig cfg;
  cfg.input_dim = 40;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 256;
  auto p = init_mlp(cfg, 7);
  const double bound = std::sqrt(6.0 / (40.0 + 256.0));
  double maxabs = 0.0;
  REQUIRE(p.weights[0].size() == 10240);
  for (std::size_t i = 0; i < p.weights[0].size(); ++i)
    maxabs = std::max(maxabs, std::abs(p.weights[0].data()[i]));
  CHECK(maxabs <= bound);
  CHECK(maxabs > 0.95 * bound);  // the sample fills the range
  for (std::size_t i = 0; i < p.biases[0].size(); ++i)
    CHECK(p.biases[0].data()[i] == 0.0);
}

TEST_CASE("zero parameters evaluate to zero") {
  auto cfg = small_cfg(3);
  MlpParams p;
  p.config = cfg;
  int fan_in = cfg.input_dim;
  for (int k = 0; k <= cfg.hidden_layers; ++k) {
    const int fan_out = k == cfg.hidden_layers ? 1 : cfg.hidden_width;
    p.weights.push_back(ad::Tensor(fan_out, fan_in));
    p.biases.push_back(ad::Tensor(fan_out, 1));
    fan_in = fan_out;
  }
  ad::Tape tape;
  const double x[] = {0.4, -1.0, 2.5};
  CHECK(mlp_eval(tape, p, 0.7, x).scalar() == 0.0);
}

TEST_CASE("identity first layer on zero input gives sum of sin(0)") {
  MlpConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 3;
  MlpParams p;
  p.config = cfg;
  ad::Tensor w0(3, 3);
  for (int i = 0; i < 3; ++i) w0(i, i) = 1.0;
  ad::Tensor w1(1, 3);
  for (int j = 0; j < 3; ++j) w1(0, j) = 1.0;
  p.weights = {w0, w1};
  p.biases = {ad::Tensor(3, 1), ad::Tensor(1, 1)};
  ad::Tape tape;
  const double x[] = {0.0, 0.0};
  CHECK(mlp_eval(tape, p, 0.0, x).scalar() == 0.0);
}

TEST_CASE("2-2-1 network matches hand evaluation") {
  MlpConfig cfg;
  cfg.input_dim = 2;  // (t, x) with d = 1
  cfg.hidden_layers = 1;
  cfg.hidden_width = 2;
  MlpParams p;
  p.config = cfg;
  p.weights = {ad::Tensor::from_rows(2, 2, {0.3, -0.2, 0.5, 0.1}),
               ad::Tensor::from_rows(1, 2, {0.7, -0.4})};
  p.biases = {ad::Tensor::colvec(std::vector<double>{0.1, -0.3}),
              ad::Tensor::colvec(std::vector<double>{0.2})};

  const double t = 0.5, x = 1.5;
  const double h0 = std::sin(0.3 * t - 0.2 * x + 0.1);
  const double h1 = std::sin(0.5 * t + 0.1 * x - 0.3);
  const double expect = 0.7 * h0 - 0.4 * h1 + 0.2;

  ad::Tape tape;
  const double xs[] = {x};
  CHECK(mlp_eval(tape, p, t, xs).scalar() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("spatial gradient: constant and sin(x1) hand cases") {
  // constant network: zero weights, output bias c
  MlpConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 2;
  MlpParams p;
  p.config = cfg;
  p.weights = {ad::Tensor(2, 4), ad::Tensor(1, 2)};
  p.biases = {ad::Tensor(2, 1), ad::Tensor(1, 1)};
  p.biases[1].data()[0] = 3.25;
  {
    ad::Tape tape;
    const double x[] = {0.3, -0.4, 1.0};
    auto [u, z] = mlp_eval_with_spatial_grad(tape, p, 0.1, x);
    CHECK(u.scalar() == 3.25);
    for (int i = 0; i < 3; ++i) CHECK(z.value()(i, 0) == 0.0);
  }

  // u(t, x) = sin(x1)
  MlpConfig cfg2;
  cfg2.input_dim = 3;  // (t, x1, x2)
  cfg2.hidden_layers = 1;
  cfg2.hidden_width = 1;
  MlpParams q;
  q.config = cfg2;
  q.weights = {ad::Tensor::from_rows(1, 3, {0.0, 1.0, 0.0}),
               ad::Tensor::from_rows(1, 1, {1.0})};
  q.biases = {ad::Tensor(1, 1), ad::Tensor(1, 1)};
  {
    ad::Tape tape;
    const double x[] = {0.8, -2.0};
    auto [u, z] = mlp_eval_with_spatial_grad(tape, q, 0.4, x);
    CHECK(u.scalar() == doctest::Approx(std::sin(0.8)).epsilon(1e-14));
    CHECK(z.value()(0, 0) == doctest::Approx(std::cos(0.8)).epsilon(1e-14));
    CHECK(z.value()(1, 0) == 0.0);
  }
}

TEST_CASE("spatial gradient matches central finite differences") {
  auto cfg = small_cfg(4);
  auto p = init_mlp(cfg, 31);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> x(4);
    for (auto& v : x) v = u(rng);
    const double t = 0.5 * (u(rng) + 1.0);

    ad::Tape tape;
    auto [uv, z] = mlp_eval_with_spatial_grad(tape, p, t, x);
    for (int i = 0; i < 4; ++i) {
      const double h = 1e-5;
      auto xp = x;
      xp[i] += h;
      ad::Tape t1;
      const double fp = mlp_eval(t1, p, t, xp).scalar();
      xp[i] = x[i] - h;
      ad::Tape t2;
      const double fm = mlp_eval(t2, p, t, xp).scalar();
      const double fd = (fp - fm) / (2.0 * h);
      const double a = z.value()(i, 0);
      CHECK(std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12) < 1e-5);
    }
  }
}

TEST_CASE("parameter gradients through (u, z) match finite differences") {
  // s(theta) = u + sum_i z_i^2 exercises differentiation through the
  // emitted input-gradient subgraph.
  auto cfg = small_cfg(2, 4, 2);
  auto p = init_mlp(cfg, 77);
  const ad::Tensor x = ad::Tensor::from_rows(1, 2, {0.4, -0.9});
  const double t = 0.3;

  auto svalue = [&](const MlpParams& params) {
    ad::Tape tape;
    auto b = bind_mlp(tape, params, true);
    auto [u, z] = ugrad_batch(tape, b, t, x);
    return tape.add(tape.sum(u), tape.sum(tape.square(z))).scalar();
  };

  ad::Tape tape;
  auto b = bind_mlp(tape, p, true);
  auto [u, z] = ugrad_batch(tape, b, t, x);
  ad::AdValue s = tape.add(tape.sum(u), tape.sum(tape.square(z)));
  auto leaves = binding_leaves(b);
  auto grads = tape.grad_values(s, leaves);

  const double h = 1e-6;
  int leaf_idx = 0;
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    for (ad::Tensor* tgt : {&p.weights[k], &p.biases[k]}) {
      const ad::Tensor& g = grads[leaf_idx++];
      for (std::size_t i = 0; i < tgt->size(); ++i) {
        const double saved = tgt->data()[i];
        tgt->data()[i] = saved + h;
        const double fp = svalue(p);
        tgt->data()[i] = saved - h;
        const double fm = svalue(p);
        tgt->data()[i] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double a = g.data()[i];
        CHECK(std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12) < 1e-4);
      }
    }
  }
}

TEST_CASE("single unit-scale subnet with unit combination equals the mlp") {
  auto cfg = small_cfg(3);
  auto sub = init_mlp(cfg, 13);

  MscaleConfig mcfg;
  mcfg.subnet = cfg;
  mcfg.scales = {std::vector<double>(cfg.input_dim, 1.0)};
  MscaleParams mp;
  mp.config = mcfg;
  mp.subnets = {sub};
  mp.combo_w = ad::Tensor::scalar(1.0);
  mp.combo_b = ad::Tensor(1, 1);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> x(3);
    for (auto& v : x) v = u(rng);
    const double t = 0.5;
    ad::Tape t1, t2;
    CHECK(mlp_eval(t1, sub, t, x).scalar() ==
          mscale_eval(t2, mp, t, x).scalar());
  }
}

TEST_CASE("zero combination weights output the shared bias") {
  auto cfg = small_cfg(2);
  auto mcfg = MscaleConfig::time_scaled(cfg, 3, 3.0);
  auto mp = init_mscale(mcfg, 21);
  mp.combo_w = ad::Tensor(3, 1);
  mp.combo_b = ad::Tensor::scalar(-1.75);
  ad::Tape tape;
  const double x[] = {0.9, 0.1};
  CHECK(mscale_eval(tape, mp, 0.25, x).scalar() == -1.75);
}

TEST_CASE("four time-scaled subnets match a hand-computed sum") {
  // subnet i: u_i(t, x) = sin(a_i t + x1), combined with weights w_i.
  MlpConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_layers = 1;
  cfg.hidden_width = 1;

  MscaleConfig mcfg = MscaleConfig::time_scaled(cfg, 4, 3.0);
  MscaleParams mp;
  mp.config = mcfg;
  for (int i = 0; i < 4; ++i) {
    MlpParams sub;
    sub.config = cfg;
    sub.weights = {ad::Tensor::from_rows(1, 2, {0.5, 1.0}),
                   ad::Tensor::from_rows(1, 1, {1.0})};
    sub.biases = {ad::Tensor(1, 1), ad::Tensor(1, 1)};
    mp.subnets.push_back(sub);
  }
  mp.combo_w =
      ad::Tensor::colvec(std::vector<double>{0.3, -0.2, 0.5, 0.1});
  mp.combo_b = ad::Tensor::scalar(0.05);

  const double t = 0.6, x1 = 0.7;
  const double scales[] = {1.0, 3.0, 9.0, 27.0};
  const double ws[] = {0.3, -0.2, 0.5, 0.1};
  double expect = 0.05;
  for (int i = 0; i < 4; ++i)
    expect += ws[i] * std::sin(0.5 * scales[i] * t + x1);

  ad::Tape tape;
  const double xs[] = {x1};
  CHECK(mscale_eval(tape, mp, t, xs).scalar() ==
        doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("mscale spatial gradient within finite-difference tolerance") {
  auto mcfg = MscaleConfig::time_scaled(small_cfg(3, 5, 2), 4, 3.0);
  auto mp = init_mscale(mcfg, 8);
  const std::vector<double> x{0.4, 1.1, -0.3};
  const double t = 0.45;
  ad::Tape tape;
  auto [u, z] = mscale_eval_with_spatial_grad(tape, mp, t, x);
  for (int i = 0; i < 3; ++i) {
    const double h = 1e-5;
    auto xp = x;
    xp[i] += h;
    ad::Tape t1;
    const double fp = mscale_eval(t1, mp, t, xp).scalar();
    xp[i] = x[i] - h;
    ad::Tape t2;
    const double fm = mscale_eval(t2, mp, t, xp).scalar();
    const double fd = (fp - fm) / (2.0 * h);
    const double a = z.value()(i, 0);
    CHECK(std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12) < 1e-5);
  }
}

TEST_CASE("tape-free batched values equal the tape evaluation bitwise") {
  auto cfg = small_cfg(4, 8, 3);
  auto p = init_mlp(cfg, 55);
  auto mcfg = MscaleConfig::time_scaled(small_cfg(4, 4, 2), 3, 3.0);
  auto mp = init_mscale(mcfg, 56);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ad::Tensor x(5, 4);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  const double t = 0.66;

  ad::Tape tape;
  auto b = bind_mlp(tape, p, false);
  auto uv = u_batch(tape, b, t, x);
  auto fast = mlp_values(p, t, x);
  REQUIRE((int)fast.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(uv.value()(i, 0) == fast[i]);

  ad::Tape tape2;
  auto mb = bind_mscale(tape2, mp, false);
  auto mv = u_batch(tape2, mb, t, x);
  auto mfast = mscale_values(mp, t, x);
  for (int i = 0; i < 5; ++i) CHECK(mv.value()(i, 0) == mfast[i]);
}

TEST_CASE("dimension mismatches are rejected") {
  auto cfg = small_cfg(3);
  auto p = init_mlp(cfg, 2);
  ad::Tape tape;
  const double x[] = {1.0, 2.0};  // d=2 against a d=3 network
  CHECK_THROWS_AS(mlp_eval(tape, p, 0.0, x), ShapeError);

  MscaleConfig bad;
  bad.subnet = cfg;
  bad.scales = {std::vector<double>(2, 1.0)};  // wrong scale length
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
