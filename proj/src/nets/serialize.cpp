#include "cmcrd/serialize.hpp"

#include "cmcrd/errors.hpp"

namespace cmcrd {

nlohmann::json to_json(const NetworkSpec& s) {
  return {{"family", to_string(s.family)},
          {"input_dim", s.input_dim},
          {"channels", s.channels},
          {"bands", s.bands},
          {"hidden", s.hidden},
          {"feature_dim", s.feature_dim},
          {"num_classes", s.num_classes},
          {"cheb_order", s.cheb_order},
          {"l2_coefficient", s.l2_coefficient}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec s;
    s.family = parse_family(j.at("family").get<std::string>());
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.channels = j.at("channels").get<std::size_t>();
    s.bands = j.at("bands").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.feature_dim = j.at("feature_dim").get<std::size_t>();
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.cheb_order = j.at("cheb_order").get<std::size_t>();
    s.l2_coefficient = j.at("l2_coefficient").get<double>();
    validate(s);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("network spec: ") + e.what());
  }
}

nlohmann::json to_json(const OptimizerConfig& c) {
  return {{"rule", to_string(c.rule)},       {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},          {"beta1", c.beta1},
          {"beta2", c.beta2},                {"epsilon", c.epsilon},
          {"weight_decay", c.weight_decay}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
  try {
    OptimizerConfig c;
    c.rule = parse_opt_rule(j.at("rule").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("optimizer config: ") + e.what());
  }
}

}  // namespace cmcrd
