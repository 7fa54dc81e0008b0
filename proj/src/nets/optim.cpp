#include <cmath>
#include <string>

#include "cmcrd/errors.hpp"
#include "cmcrd/nets.hpp"

namespace cmcrd {

const char* to_string(OptRule r) {
  switch (r) {
    case OptRule::Sgd: return "sgd";
    case OptRule::SgdMomentum: return "sgd-momentum";
    case OptRule::Adam: return "adam";
  }
  return "?";
}

OptRule parse_opt_rule(const std::string& s) {
  if (s == "sgd") return OptRule::Sgd;
  if (s == "sgd-momentum" || s == "momentum") return OptRule::SgdMomentum;
  if (s == "adam") return OptRule::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd|sgd-momentum|adam)");
}

OptimizerState make_optimizer(const OptimizerConfig& config, const ParamSet& params) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be > 0");
  if (!(config.weight_decay >= 0.0)) throw ConfigError("optimizer: weight decay must be >= 0");
  OptimizerState s;
  s.config = config;
  for (const auto& t : params) {
    if (config.rule != OptRule::Sgd) s.first.emplace_back(t.value.rows(), t.value.cols());
    if (config.rule == OptRule::Adam) s.second.emplace_back(t.value.rows(), t.value.cols());
  }
  return s;
}

void opt_step(OptimizerState& state, ParamSet& params, const ParamSet& grads,
              std::string_view provenance) {
  if (grads.size() != params.size()) throw ShapeError("opt_step: gradient/parameter count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].value.same_shape(params[i].value))
      throw ShapeError("opt_step: shape mismatch at " + params[i].name);
    if (!grads[i].value.all_finite())
      throw TrainingError("non-finite gradient for '" + params[i].name + "'" +
                          (provenance.empty() ? "" : " at " + std::string(provenance)));
  }

  const auto& c = state.config;
  ++state.step;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].value.flat();
    auto g = grads[i].value.flat();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j] + c.weight_decay * theta[j];
      switch (c.rule) {
        case OptRule::Sgd:
          theta[j] -= c.learning_rate * gj;
          break;
        case OptRule::SgdMomentum: {
          double& v = state.first[i].flat()[j];
          v = c.momentum * v + gj;
          theta[j] -= c.learning_rate * v;
          break;
        }
        case OptRule::Adam: {
          double& m = state.first[i].flat()[j];
          double& v = state.second[i].flat()[j];
          m = c.beta1 * m + (1.0 - c.beta1) * gj;
          v = c.beta2 * v + (1.0 - c.beta2) * gj * gj;
          theta[j] -= c.learning_rate * (m / bias1) / (std::sqrt(v / bias2) + c.epsilon);
          break;
        }
      }
    }
  }
}

}  // namespace cmcrd
