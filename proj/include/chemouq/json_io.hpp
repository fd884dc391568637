#pragma once

#include "chemouq/hdg.hpp"
#include "chemouq/model.hpp"

#include <json.hpp>

namespace chemouq {

// {"varying": [{"name", "lo", "hi"}...], "fixed": {name: value}, "L", "T"}
nlohmann::json space_to_json(const ParameterSpace& space);
// Throws ArgumentError on unknown names or missing fields.
ParameterSpace space_from_json(const nlohmann::json& j);

nlohmann::json solver_options_to_json(const hdg::SolverOptions& opts);
// Missing keys keep their defaults.
hdg::SolverOptions solver_options_from_json(const nlohmann::json& j);

} // namespace chemouq
