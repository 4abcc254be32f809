#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sonovote/model.hpp"
#include "sonovote/tensor.hpp"

namespace sonovote {

enum class OptimizerKind { sgdm, adam };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::sgdm ? "sgdm" : "adam";
}

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgdm") return OptimizerKind::sgdm;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer: " + name);
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgdm;
  double learning_rate = 0.00005;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline void validate(const OptimizerConfig& cfg) {
  if (!(cfg.learning_rate > 0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  auto check_unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) {
      throw std::invalid_argument(std::string(name) + " must lie in [0,1)");
    }
  };
  check_unit(cfg.momentum, "momentum");
  check_unit(cfg.beta1, "beta1");
  check_unit(cfg.beta2, "beta2");
  if (!(cfg.epsilon > 0)) {
    throw std::invalid_argument("epsilon must be positive");
  }
}

inline nlohmann::json optimizer_config_to_json(const OptimizerConfig& cfg) {
  return nlohmann::json{{"kind", optimizer_name(cfg.kind)},
                        {"learning_rate", cfg.learning_rate},
                        {"momentum", cfg.momentum},
                        {"beta1", cfg.beta1},
                        {"beta2", cfg.beta2},
                        {"epsilon", cfg.epsilon}};
}

inline OptimizerConfig optimizer_config_from_json(const nlohmann::json& j) {
  OptimizerConfig cfg;
  cfg.kind = parse_optimizer(j.at("kind").get<std::string>());
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  validate(cfg);
  return cfg;
}

template <class T>
struct OptimizerState {
  std::int64_t step_count = 0;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
};

template <class T>
OptimizerState<T> init_optimizer_state(const Parameters<T>& params,
                                       const OptimizerConfig& cfg) {
  validate(cfg);
  OptimizerState<T> state;
  for (const auto& [name, tensor] : params.tensors) {
    state.first_moment.emplace(name, Tensor<T>(tensor.shape()));
    if (cfg.kind == OptimizerKind::adam) {
      state.second_moment.emplace(name, Tensor<T>(tensor.shape()));
    }
  }
  return state;
}

namespace detail {

template <class T>
const Tensor<T>& grad_for(const std::map<std::string, Tensor<T>>& grads,
                          const std::string& name, const Tensor<T>& param) {
  const auto it = grads.find(name);
  if (it == grads.end()) {
    throw std::invalid_argument("missing gradient for parameter: " + name);
  }
  if (!it->second.same_shape(param)) {
    throw std::invalid_argument("gradient shape " + it->second.shape_str() +
                                " does not match parameter '" + name + "' " +
                                param.shape_str());
  }
  return it->second;
}

template <class T>
Tensor<T>& moment_for(std::map<std::string, Tensor<T>>& moments,
                      const std::string& name, const Tensor<T>& param) {
  const auto it = moments.find(name);
  if (it == moments.end() || !it->second.same_shape(param)) {
    throw std::invalid_argument("optimizer state missing or mismatched for: " +
                                name);
  }
  return it->second;
}

}  // namespace detail

// v <- momentum*v - lr*g;  theta <- theta + v.  Frozen tensors are skipped.
template <class T>
void sgdm_step(Parameters<T>& params,
               const std::map<std::string, Tensor<T>>& grads,
               OptimizerState<T>& state, const OptimizerConfig& cfg) {
  validate(cfg);
  if (cfg.kind != OptimizerKind::sgdm) {
    throw std::invalid_argument("sgdm_step called with non-sgdm config");
  }
  const T lr = static_cast<T>(cfg.learning_rate);
  const T mu = static_cast<T>(cfg.momentum);
  for (auto& [name, theta] : params.tensors) {
    if (params.frozen.count(name)) continue;
    const Tensor<T>& g = detail::grad_for(grads, name, theta);
    Tensor<T>& v = detail::moment_for(state.first_moment, name, theta);
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      v.data()[i] = mu * v.data()[i] - lr * g.data()[i];
      theta.data()[i] += v.data()[i];
    }
  }
  ++state.step_count;
}

// Bias-corrected Adam; epsilon is added after the square root.
template <class T>
void adam_step(Parameters<T>& params,
               const std::map<std::string, Tensor<T>>& grads,
               OptimizerState<T>& state, const OptimizerConfig& cfg) {
  validate(cfg);
  if (cfg.kind != OptimizerKind::adam) {
    throw std::invalid_argument("adam_step called with non-adam config");
  }
  const double t = static_cast<double>(state.step_count + 1);
  const double corr1 = 1.0 - std::pow(cfg.beta1, t);
  const double corr2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, theta] : params.tensors) {
    if (params.frozen.count(name)) continue;
    const Tensor<T>& g = detail::grad_for(grads, name, theta);
    Tensor<T>& m = detail::moment_for(state.first_moment, name, theta);
    Tensor<T>& v = detail::moment_for(state.second_moment, name, theta);
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double gi = g.data()[i];
      const double mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      m.data()[i] = static_cast<T>(mi);
      v.data()[i] = static_cast<T>(vi);
      const double mhat = mi / corr1;
      const double vhat = vi / corr2;
      theta.data()[i] -=
          static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
  ++state.step_count;
}

template <class T>
void optimizer_step(Parameters<T>& params,
                    const std::map<std::string, Tensor<T>>& grads,
                    OptimizerState<T>& state, const OptimizerConfig& cfg) {
  if (cfg.kind == OptimizerKind::sgdm) {
    sgdm_step(params, grads, state, cfg);
  } else {
    adam_step(params, grads, state, cfg);
  }
}

}  // namespace sonovote
