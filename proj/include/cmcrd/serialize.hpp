#pragma once

#include <json.hpp>

#include "cmcrd/nets.hpp"

namespace cmcrd {

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const OptimizerConfig& config);
OptimizerConfig optimizer_from_json(const nlohmann::json& j);

}  // namespace cmcrd
