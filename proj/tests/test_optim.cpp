#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>

#include "sonovote/optim.hpp"

using sonovote::OptimizerConfig;
using sonovote::OptimizerKind;
using sonovote::OptimizerState;
using sonovote::Parameters;
using sonovote::Tensor;
using sonovote::init_optimizer_state;
using sonovote::optimizer_step;

namespace {

// A single scalar parameter named "w" for hand-checkable steps.
Parameters<double> scalar_param(double value) {
  Parameters<double> p;
  p.tensors.emplace("w", Tensor<double>({1}, {value}));
  return p;
}

std::map<std::string, Tensor<double>> scalar_grad(double g) {
  std::map<std::string, Tensor<double>> grads;
  grads.emplace("w", Tensor<double>({1}, {g}));
  return grads;
}

OptimizerConfig sgdm_cfg(double lr, double momentum) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::sgdm;
  cfg.learning_rate = lr;
  cfg.momentum = momentum;
  return cfg;
}

OptimizerConfig adam_cfg(double lr) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::adam;
  cfg.learning_rate = lr;
  return cfg;
}

}  // namespace

TEST_CASE("momentum steps match the hand-computed sequence", "[optim]") {
  // v <- mu*v - lr*g; w <- w + v, starting from w=1, g=2, lr=0.1, mu=0.9:
  // step 1: v = -0.2, w = 0.8. step 2: v = -0.38, w = 0.42.
  auto params = scalar_param(1.0);
  const auto cfg = sgdm_cfg(0.1, 0.9);
  auto state = init_optimizer_state(params, cfg);
  optimizer_step(params, scalar_grad(2.0), state, cfg);
  CHECK(params.tensors.at("w")[0] == Catch::Approx(0.8).margin(1e-15));
  optimizer_step(params, scalar_grad(2.0), state, cfg);
  CHECK(params.tensors.at("w")[0] == Catch::Approx(0.42).margin(1e-15));
  CHECK(state.step_count == 2);
}

TEST_CASE("first Adam step moves by nearly the learning rate", "[optim]") {
  // With a fresh state the bias-corrected ratio is g/(|g| + eps'), so the
  // first step is lr * g / (|g| + tiny), here with g=3, lr=1e-3.
  auto params = scalar_param(0.5);
  const auto cfg = adam_cfg(1e-3);
  auto state = init_optimizer_state(params, cfg);
  optimizer_step(params, scalar_grad(3.0), state, cfg);
  const double expected = 0.5 - 1e-3 * 3.0 / (3.0 + 1e-8);
  CHECK(params.tensors.at("w")[0] == Catch::Approx(expected).margin(1e-15));
}

TEST_CASE("optimizers stay put on a zero gradient", "[optim]") {
  for (const auto& cfg : {sgdm_cfg(0.1, 0.9), adam_cfg(1e-3)}) {
    auto params = scalar_param(0.7);
    auto state = init_optimizer_state(params, cfg);
    for (int i = 0; i < 5; ++i) {
      optimizer_step(params, scalar_grad(0.0), state, cfg);
    }
    CHECK(params.tensors.at("w")[0] == 0.7);
    CHECK(state.step_count == 5);
  }
}

TEST_CASE("SGDM trace matches a scalar reference over 1000 steps",
          "[optim]") {
  // Minimize f(w) = w^2 (gradient 2w) and compare against an independent
  // scalar implementation of the same recurrence.
  auto params = scalar_param(1.0);
  const auto cfg = sgdm_cfg(0.01, 0.9);
  auto state = init_optimizer_state(params, cfg);

  double w_ref = 1.0, v_ref = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double w = params.tensors.at("w")[0];
    optimizer_step(params, scalar_grad(2.0 * w), state, cfg);
    v_ref = 0.9 * v_ref - 0.01 * (2.0 * w_ref);
    w_ref += v_ref;
    REQUIRE(params.tensors.at("w")[0] == Catch::Approx(w_ref).margin(1e-12));
  }
  CHECK(std::abs(params.tensors.at("w")[0]) < 1e-3);
}

TEST_CASE("Adam trace matches a scalar reference over 1000 steps",
          "[optim]") {
  auto params = scalar_param(1.0);
  const auto cfg = adam_cfg(0.01);
  auto state = init_optimizer_state(params, cfg);

  double w_ref = 1.0, m_ref = 0.0, v_ref = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double w = params.tensors.at("w")[0];
    const double g = 2.0 * w_ref;
    optimizer_step(params, scalar_grad(2.0 * w), state, cfg);
    m_ref = 0.9 * m_ref + 0.1 * g;
    v_ref = 0.999 * v_ref + 0.001 * g * g;
    const double t = i + 1;
    const double mhat = m_ref / (1.0 - std::pow(0.9, t));
    const double vhat = v_ref / (1.0 - std::pow(0.999, t));
    w_ref -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    REQUIRE(params.tensors.at("w")[0] == Catch::Approx(w_ref).margin(1e-12));
  }
  CHECK(std::abs(params.tensors.at("w")[0]) < 1e-2);
}

TEST_CASE("each Adam step is bounded by the learning rate scale", "[optim]") {
  // |step| <= lr / (1 - beta1) is the classic displacement bound.
  auto params = scalar_param(5.0);
  const auto cfg = adam_cfg(0.01);
  auto state = init_optimizer_state(params, cfg);
  sonovote::DetRng rng(9);
  double prev = 5.0;
  for (int i = 0; i < 200; ++i) {
    optimizer_step(params, scalar_grad(rng.uniform(-10.0, 10.0)), state, cfg);
    const double cur = params.tensors.at("w")[0];
    CHECK(std::abs(cur - prev) <= 0.01 / (1.0 - 0.9) + 1e-12);
    prev = cur;
  }
}

TEST_CASE("frozen tensors are not updated", "[optim]") {
  Parameters<double> params;
  params.tensors.emplace("a", Tensor<double>({1}, {1.0}));
  params.tensors.emplace("b", Tensor<double>({1}, {1.0}));
  params.frozen.insert("a");
  std::map<std::string, Tensor<double>> grads;
  grads.emplace("a", Tensor<double>({1}, {1.0}));
  grads.emplace("b", Tensor<double>({1}, {1.0}));

  for (const auto& cfg : {sgdm_cfg(0.1, 0.9), adam_cfg(0.1)}) {
    auto p = params;
    auto state = init_optimizer_state(p, cfg);
    optimizer_step(p, grads, state, cfg);
    CHECK(p.tensors.at("a")[0] == 1.0);
    CHECK(p.tensors.at("b")[0] != 1.0);
  }
}

TEST_CASE("identical runs produce identical trajectories", "[optim]") {
  auto run = [] {
    auto params = scalar_param(2.0);
    const auto cfg = adam_cfg(0.005);
    auto state = init_optimizer_state(params, cfg);
    for (int i = 0; i < 50; ++i) {
      const double w = params.tensors.at("w")[0];
      optimizer_step(params, scalar_grad(std::sin(w) + 2.0 * w), state, cfg);
    }
    return params.tensors.at("w")[0];
  };
  CHECK(run() == run());
}

TEST_CASE("gradient shape mismatches are rejected", "[optim]") {
  auto params = scalar_param(1.0);
  const auto cfg = sgdm_cfg(0.1, 0.9);
  auto state = init_optimizer_state(params, cfg);
  std::map<std::string, Tensor<double>> bad;
  bad.emplace("w", Tensor<double>({2}, {1.0, 2.0}));
  CHECK_THROWS(optimizer_step(params, bad, state, cfg));
  std::map<std::string, Tensor<double>> missing;
  CHECK_THROWS(optimizer_step(params, missing, state, cfg));
}

TEST_CASE("config validation rejects out-of-range values", "[optim]") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS(sonovote::validate(cfg));
  cfg = OptimizerConfig{};
  cfg.momentum = 1.0;
  CHECK_THROWS(sonovote::validate(cfg));
  cfg = OptimizerConfig{};
  cfg.beta2 = -0.1;
  CHECK_THROWS(sonovote::validate(cfg));
  cfg = OptimizerConfig{};
  cfg.epsilon = 0.0;
  CHECK_THROWS(sonovote::validate(cfg));
}

TEST_CASE("optimizer config JSON survives a round trip", "[optim]") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::adam;
  cfg.learning_rate = 0.00005;
  cfg.beta1 = 0.85;
  const OptimizerConfig back = sonovote::optimizer_config_from_json(
      sonovote::optimizer_config_to_json(cfg));
  CHECK(back.kind == cfg.kind);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.beta1 == cfg.beta1);
  CHECK(back.beta2 == cfg.beta2);
  CHECK(back.epsilon == cfg.epsilon);
}

TEST_CASE("default optimizer settings", "[optim]") {
  const OptimizerConfig cfg;
  CHECK(cfg.kind == OptimizerKind::sgdm);
  CHECK(cfg.learning_rate == 0.00005);
  CHECK(cfg.momentum == 0.9);
}
