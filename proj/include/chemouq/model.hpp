#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chemouq {

// Every scalar that enters the chemotaxis model. The order is the canonical
// order used in names, signatures and serialized artifacts.
enum class Param : int {
  mu = 0,     // chemoattractant diffusivity [um^2/s]
  nu,         // immune-cell diffusivity [um^2/s]
  a,          // chemoattractant consumption rate [1/s]
  chi,        // chemotactic sensitivity [um^3/(s mol)]
  k_u0,       // amplitude of the initial immune-cell profile [mol]
  c_u0,       // center of the initial immune-cell profile [um]
  sigma_u0,   // spread of the initial immune-cell profile [um]
  k_phi,      // amplitude of the chemoattractant source [mol/s]
  rho,        // decay rate of the source [1/s]
  c_phi,      // center of the source [um]
  sigma_phi,  // spread of the source [um]
};

inline constexpr std::size_t kParamCount = 11;
inline constexpr std::array<Param, kParamCount> kAllParams = {
    Param::mu,    Param::nu,  Param::a,     Param::chi,   Param::k_u0,     Param::c_u0,
    Param::sigma_u0, Param::k_phi, Param::rho, Param::c_phi, Param::sigma_phi};

std::string_view param_name(Param p);
std::optional<Param> param_from_name(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

// Fixed physical constants and nominal values of the non-varying parameters.
struct ModelConstants {
  double L = 1000.0;       // domain length [um]
  double T = 1800.0;       // final time [s]
  double a = 1e-4;
  double chi = 5e-2;
  double k_u0 = 50.0;
  double c_u0 = 750.0;
  double sigma_u0 = 10.0;
};

// A fully resolved parameter point; what the solver consumes.
struct ModelParameters {
  double mu = 900.0;
  double nu = 200.0;
  double a = 1e-4;
  double chi = 5e-2;
  double k_u0 = 50.0;
  double c_u0 = 750.0;
  double sigma_u0 = 10.0;
  double k_phi = 1300.0;
  double rho = 25e-4;
  double c_phi = 250.0;
  double sigma_phi = 10.0;
  double L = 1000.0;
  double T = 1800.0;

  double& operator[](Param p);
  double operator[](Param p) const;
};

// Values of the varying parameters, in the owning space's order.
struct ParameterVector {
  std::vector<double> values;

  ParameterVector() = default;
  explicit ParameterVector(std::vector<double> v) : values(std::move(v)) {}
  ParameterVector(std::initializer_list<double> v) : values(v) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::span<const double> span() const { return values; }
  bool operator==(const ParameterVector&) const = default;
};

// The uncertain-parameter box: an ordered list of varying parameters with
// their ranges, plus values for every other model parameter.
class ParameterSpace {
public:
  // Throws ArgumentError when the invariants do not hold (empty or inverted
  // ranges, duplicate names, overlapping or missing identifiers).
  ParameterSpace(std::vector<Param> varying, std::vector<Interval> ranges,
                 std::map<Param, double> fixed, ModelConstants constants = {});

  std::size_t dim() const { return varying_.size(); }
  const std::vector<Param>& varying() const { return varying_; }
  const std::vector<Interval>& ranges() const { return ranges_; }
  const Interval& range(std::size_t n) const { return ranges_[n]; }
  const std::map<Param, double>& fixed() const { return fixed_; }
  const ModelConstants& constants() const { return constants_; }

  std::optional<std::size_t> index_of(Param p) const;
  std::vector<std::string> names() const;

  bool contains(std::span<const double> y) const;
  bool contains(const ParameterVector& y) const { return contains(y.span()); }
  ParameterVector midpoint() const;

  // Full parameter set for a point of the box. Throws ArgumentError on a
  // dimension mismatch; does not require y to lie inside the box.
  ModelParameters resolve(std::span<const double> y) const;
  ModelParameters resolve(const ParameterVector& y) const { return resolve(y.span()); }

  // Canonical text identifying the ordering and ranges; part of every
  // serialized surrogate.
  std::string signature() const;

  bool operator==(const ParameterSpace& other) const { return signature() == other.signature(); }

private:
  std::vector<Param> varying_;
  std::vector<Interval> ranges_;
  std::map<Param, double> fixed_;
  ModelConstants constants_;
};

Interval table_range(Param p);

// (mu, nu, k_phi, rho, c_phi, sigma_phi) with the tabulated ranges.
ParameterSpace default_space_6d();
// (nu, k_phi, rho, c_phi); mu and sigma_phi fixed at their range midpoints.
ParameterSpace reduced_space_4d();

// Chemoattractant production rate density f_phi(x, t). Throws DomainError
// outside [0, L] x [0, T].
double forcing_chemoattractant(const ModelParameters& p, double x, double t);
double forcing_chemoattractant(const ParameterSpace& space, const ParameterVector& y,
                               double x, double t);

// Initial immune-cell density u0(x); throws DomainError outside [0, L].
double initial_immune_density(const ModelParameters& p, double x);
double initial_immune_density(double x, const ModelConstants& c = {});
// Initial chemoattractant density, identically zero.
double initial_chemoattractant_density(double x, const ModelConstants& c = {});

// Fraction of the normalized source Gaussian that lies inside [0, L].
double source_mass_factor(const ModelParameters& p);

// Exact total chemoattractant I(t) = k_phi G (e^{-a t} - e^{-rho t}) / (rho - a).
// Throws SingularParameterError when rho == a and DomainError for t < 0.
double closed_form_I(const ModelParameters& p, double t);
double closed_form_I(const ParameterSpace& space, const ParameterVector& y, double t);

} // namespace chemouq
