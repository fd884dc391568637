#include "chemouq/json_io.hpp"

namespace chemouq {

using nlohmann::json;

namespace {

Param require_param(const std::string& name) {
  auto p = param_from_name(name);
  if (!p) throw ArgumentError("unknown parameter '" + name + "'");
  return *p;
}

} // namespace

json space_to_json(const ParameterSpace& space) {
  json varying = json::array();
  for (std::size_t n = 0; n < space.dim(); ++n)
    varying.push_back({{"name", std::string(param_name(space.varying()[n]))},
                       {"lo", space.range(n).lo},
                       {"hi", space.range(n).hi}});
  json fixed = json::object();
  for (const auto& [p, v] : space.fixed()) fixed[std::string(param_name(p))] = v;
  return {{"varying", varying},
          {"fixed", fixed},
          {"L", space.constants().L},
          {"T", space.constants().T}};
}

ParameterSpace space_from_json(const json& j) {
  try {
    std::vector<Param> varying;
    std::vector<Interval> ranges;
    for (const auto& v : j.at("varying")) {
      varying.push_back(require_param(v.at("name").get<std::string>()));
      ranges.push_back({v.at("lo").get<double>(), v.at("hi").get<double>()});
    }
    std::map<Param, double> fixed;
    for (const auto& [name, v] : j.at("fixed").items()) fixed[require_param(name)] = v.get<double>();
    ModelConstants c;
    c.L = j.value("L", c.L);
    c.T = j.value("T", c.T);
    return ParameterSpace(varying, ranges, fixed, c);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("parameter space: ") + e.what());
  }
}

json solver_options_to_json(const hdg::SolverOptions& o) {
  return {{"tau_u", o.tau_u},
          {"tau_phi", o.tau_phi},
          {"newton_tol", o.newton_tol},
          {"newton_max_iter", o.newton_max_iter},
          {"coupling", hdg::to_string(o.coupling)}};
}

hdg::SolverOptions solver_options_from_json(const json& j) {
  hdg::SolverOptions o;
  try {
    o.tau_u = j.value("tau_u", o.tau_u);
    o.tau_phi = j.value("tau_phi", o.tau_phi);
    o.newton_tol = j.value("newton_tol", o.newton_tol);
    o.newton_max_iter = j.value("newton_max_iter", o.newton_max_iter);
    if (j.contains("coupling")) o.coupling = hdg::coupling_from_string(j.at("coupling").get<std::string>());
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("solver options: ") + e.what());
  }
  o.validate();
  return o;
}

} // namespace chemouq
