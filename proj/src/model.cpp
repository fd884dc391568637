#include "chemouq/model.hpp"

#include "chemouq/util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace chemouq {

namespace {

constexpr std::array<std::string_view, kParamCount> kNames = {
    "mu", "nu", "a", "chi", "k_u0", "c_u0", "sigma_u0", "k_phi", "rho", "c_phi", "sigma_phi"};

double gaussian(double x, double amplitude, double center, double spread) {
  const double z = (x - center) / spread;
  return amplitude / (std::sqrt(2.0 * std::numbers::pi) * spread) * std::exp(-0.5 * z * z);
}

void check_x(double x, double L) {
  if (!(x >= 0.0 && x <= L)) throw DomainError("position outside [0, L]: " + format_double(x));
}

} // namespace

std::string_view param_name(Param p) { return kNames[static_cast<std::size_t>(p)]; }

std::optional<Param> param_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kParamCount; ++i)
    if (kNames[i] == name) return static_cast<Param>(i);
  return std::nullopt;
}

double& ModelParameters::operator[](Param p) {
  switch (p) {
    case Param::mu: return mu;
    case Param::nu: return nu;
    case Param::a: return a;
    case Param::chi: return chi;
    case Param::k_u0: return k_u0;
    case Param::c_u0: return c_u0;
    case Param::sigma_u0: return sigma_u0;
    case Param::k_phi: return k_phi;
    case Param::rho: return rho;
    case Param::c_phi: return c_phi;
    case Param::sigma_phi: return sigma_phi;
  }
  throw ArgumentError("unknown parameter");
}

double ModelParameters::operator[](Param p) const {
  return const_cast<ModelParameters&>(*this)[p];
}

ParameterSpace::ParameterSpace(std::vector<Param> varying, std::vector<Interval> ranges,
                               std::map<Param, double> fixed, ModelConstants constants)
    : varying_(std::move(varying)), ranges_(std::move(ranges)), fixed_(std::move(fixed)),
      constants_(constants) {
  if (varying_.size() != ranges_.size())
    throw ArgumentError("parameter space: names and ranges differ in length");
  if (!(constants_.L > 0.0) || !(constants_.T > 0.0))
    throw ArgumentError("parameter space: L and T must be positive");
  std::set<Param> seen;
  for (std::size_t n = 0; n < varying_.size(); ++n) {
    if (!seen.insert(varying_[n]).second)
      throw ArgumentError("parameter space: duplicate parameter " +
                          std::string(param_name(varying_[n])));
    if (!(ranges_[n].lo < ranges_[n].hi))
      throw ArgumentError("parameter space: empty range for " +
                          std::string(param_name(varying_[n])));
  }
  for (const auto& [p, v] : fixed_) {
    if (!seen.insert(p).second)
      throw ArgumentError("parameter space: " + std::string(param_name(p)) +
                          " is both varying and fixed");
  }
  if (seen.size() != kParamCount)
    throw ArgumentError("parameter space: every model parameter must be varying or fixed");
}

std::optional<std::size_t> ParameterSpace::index_of(Param p) const {
  const auto it = std::find(varying_.begin(), varying_.end(), p);
  if (it == varying_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - varying_.begin());
}

std::vector<std::string> ParameterSpace::names() const {
  std::vector<std::string> out;
  for (Param p : varying_) out.emplace_back(param_name(p));
  return out;
}

bool ParameterSpace::contains(std::span<const double> y) const {
  if (y.size() != dim()) return false;
  for (std::size_t n = 0; n < dim(); ++n)
    if (!ranges_[n].contains(y[n])) return false;
  return true;
}

ParameterVector ParameterSpace::midpoint() const {
  ParameterVector y;
  for (const auto& r : ranges_) y.values.push_back(r.midpoint());
  return y;
}

ModelParameters ParameterSpace::resolve(std::span<const double> y) const {
  if (y.size() != dim())
    throw ArgumentError("parameter vector has " + std::to_string(y.size()) +
                        " entries, space has " + std::to_string(dim()));
  ModelParameters p;
  p.L = constants_.L;
  p.T = constants_.T;
  for (const auto& [param, v] : fixed_) p[param] = v;
  for (std::size_t n = 0; n < dim(); ++n) p[varying_[n]] = y[n];
  return p;
}

std::string ParameterSpace::signature() const {
  std::ostringstream ss;
  for (std::size_t n = 0; n < dim(); ++n) {
    if (n) ss << ';';
    ss << param_name(varying_[n]) << '[' << format_double(ranges_[n].lo) << ','
       << format_double(ranges_[n].hi) << ']';
  }
  ss << '|';
  bool first = true;
  for (const auto& [p, v] : fixed_) {
    if (!first) ss << ';';
    first = false;
    ss << param_name(p) << '=' << format_double(v);
  }
  ss << "|L=" << format_double(constants_.L) << ";T=" << format_double(constants_.T);
  return ss.str();
}

Interval table_range(Param p) {
  switch (p) {
    case Param::mu: return {700.0, 1100.0};
    case Param::nu: return {100.0, 300.0};
    case Param::k_phi: return {600.0, 2000.0};
    case Param::rho: return {10e-4, 40e-4};
    case Param::c_phi: return {150.0, 350.0};
    case Param::sigma_phi: return {5.0, 15.0};
    default: break;
  }
  throw ArgumentError("parameter " + std::string(param_name(p)) + " has no tabulated range");
}

namespace {

std::map<Param, double> constant_fixed(const ModelConstants& c) {
  return {{Param::a, c.a},
          {Param::chi, c.chi},
          {Param::k_u0, c.k_u0},
          {Param::c_u0, c.c_u0},
          {Param::sigma_u0, c.sigma_u0}};
}

} // namespace

ParameterSpace default_space_6d() {
  const std::vector<Param> varying = {Param::mu,  Param::nu,    Param::k_phi,
                                      Param::rho, Param::c_phi, Param::sigma_phi};
  std::vector<Interval> ranges;
  for (Param p : varying) ranges.push_back(table_range(p));
  const ModelConstants c;
  return ParameterSpace(varying, ranges, constant_fixed(c), c);
}

ParameterSpace reduced_space_4d() {
  const std::vector<Param> varying = {Param::nu, Param::k_phi, Param::rho, Param::c_phi};
  std::vector<Interval> ranges;
  for (Param p : varying) ranges.push_back(table_range(p));
  const ModelConstants c;
  auto fixed = constant_fixed(c);
  fixed[Param::mu] = table_range(Param::mu).midpoint();
  fixed[Param::sigma_phi] = table_range(Param::sigma_phi).midpoint();
  return ParameterSpace(varying, ranges, fixed, c);
}

double forcing_chemoattractant(const ModelParameters& p, double x, double t) {
  check_x(x, p.L);
  if (!(t >= 0.0 && t <= p.T)) throw DomainError("time outside [0, T]: " + format_double(t));
  return std::exp(-p.rho * t) * gaussian(x, p.k_phi, p.c_phi, p.sigma_phi);
}

double forcing_chemoattractant(const ParameterSpace& space, const ParameterVector& y, double x,
                               double t) {
  return forcing_chemoattractant(space.resolve(y), x, t);
}

double initial_immune_density(const ModelParameters& p, double x) {
  check_x(x, p.L);
  return gaussian(x, p.k_u0, p.c_u0, p.sigma_u0);
}

double initial_immune_density(double x, const ModelConstants& c) {
  check_x(x, c.L);
  return gaussian(x, c.k_u0, c.c_u0, c.sigma_u0);
}

double initial_chemoattractant_density(double x, const ModelConstants& c) {
  check_x(x, c.L);
  return 0.0;
}

double source_mass_factor(const ModelParameters& p) {
  const double s = std::numbers::sqrt2 * p.sigma_phi;
  return 0.5 * (std::erf((p.L - p.c_phi) / s) - std::erf((0.0 - p.c_phi) / s));
}

double closed_form_I(const ModelParameters& p, double t) {
  if (t < 0.0) throw DomainError("closed_form_I: negative time");
  if (p.rho == p.a)
    throw SingularParameterError("closed_form_I: decay rate equals consumption rate");
  // (e^{-at} - e^{-rho t}) / (rho - a), written to stay accurate when rho ~ a.
  const double d = p.rho - p.a;
  const double kernel = -std::exp(-p.a * t) * std::expm1(-d * t) / d;
  return p.k_phi * source_mass_factor(p) * kernel;
}

double closed_form_I(const ParameterSpace& space, const ParameterVector& y, double t) {
  return closed_form_I(space.resolve(y), t);
}

} // namespace chemouq
