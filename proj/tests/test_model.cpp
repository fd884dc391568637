#include "chemouq/model.hpp"
#include "chemouq/util.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace chemouq;

TEST_SUITE("model") {

TEST_CASE("closed form I at nominal parameters") {
  const ModelParameters p;
  CHECK(closed_form_I(p, 0.0) == doctest::Approx(0.0));
  CHECK(closed_form_I(p, 900.0) == doctest::Approx(437954.81205090543).epsilon(1e-12));
  CHECK(closed_form_I(p, 1800.0) == doctest::Approx(446420.65805622441).epsilon(1e-12));
  CHECK(source_mass_factor(p) == doctest::Approx(1.0));
}

TEST_CASE("closed form I rejects rho == a and negative times") {
  ModelParameters p;
  p.rho = p.a;
  CHECK_THROWS_AS(closed_form_I(p, 10.0), SingularParameterError);
  CHECK_THROWS_AS(closed_form_I(ModelParameters{}, -1.0), DomainError);
}

TEST_CASE("closed form I solves dI/dt = k G e^{-rho t} - a I") {
  const auto space = default_space_6d();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterVector y;
    for (const auto& r : space.ranges()) y.values.push_back(r.lo + u(rng) * r.width());
    const auto p = space.resolve(y);
    const double G = source_mass_factor(p);
    for (double t : {10.0, 400.0, 1700.0}) {
      const double h = 1e-3;
      const double d = (closed_form_I(p, t + h) - closed_form_I(p, t - h)) / (2 * h);
      const double rhs = p.k_phi * G * std::exp(-p.rho * t) - p.a * closed_form_I(p, t);
      CHECK(d == doctest::Approx(rhs).epsilon(1e-6));
      CHECK(closed_form_I(p, t) > 0.0);
    }
  }
}

TEST_CASE("source and initial profile") {
  const ModelParameters p;
  CHECK(forcing_chemoattractant(p, 250.0, 100.0) == doctest::Approx(40.390552849000613).epsilon(1e-12));
  CHECK(initial_immune_density(p, 750.0) == doctest::Approx(1.9947114020071637).epsilon(1e-12));
  CHECK(initial_chemoattractant_density(500.0) == 0.0);
  CHECK_THROWS_AS(forcing_chemoattractant(p, -1.0, 0.0), DomainError);
  CHECK_THROWS_AS(forcing_chemoattractant(p, 10.0, 1801.0), DomainError);
  CHECK_THROWS_AS(initial_immune_density(p, 1001.0), DomainError);
}

TEST_CASE("source mass factor drops when the source sits on the wall") {
  ModelParameters p;
  p.c_phi = 0.0;
  CHECK(source_mass_factor(p) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("default and reduced spaces") {
  const auto s6 = default_space_6d();
  const auto s4 = reduced_space_4d();
  CHECK(s6.names() == std::vector<std::string>{"mu", "nu", "k_phi", "rho", "c_phi", "sigma_phi"});
  CHECK(s4.names() == std::vector<std::string>{"nu", "k_phi", "rho", "c_phi"});
  CHECK(!(s6 == s4));

  const auto p = s4.resolve(s4.midpoint());
  CHECK(p.mu == doctest::Approx(table_range(Param::mu).midpoint()));
  CHECK(p.sigma_phi == doctest::Approx(table_range(Param::sigma_phi).midpoint()));
  CHECK(p.nu == doctest::Approx(table_range(Param::nu).midpoint()));
  CHECK(s4.contains(s4.midpoint()));

  auto outside = s4.midpoint();
  outside[0] = s4.range(0).hi + 1.0;
  CHECK(!s4.contains(outside));
  CHECK_THROWS_AS(s4.resolve(ParameterVector{1.0, 2.0}), ArgumentError);
}

TEST_CASE("space invariants") {
  using chemouq::testing::make_space;
  CHECK_NOTHROW(make_space({Param::nu}, {{1.0, 2.0}}));
  CHECK_THROWS_AS(make_space({Param::nu}, {{2.0, 1.0}}), ArgumentError);
  CHECK_THROWS_AS(make_space({Param::nu, Param::nu}, {{1.0, 2.0}, {1.0, 2.0}}), ArgumentError);
  CHECK_THROWS_AS(make_space({Param::nu}, {{1.0, 2.0}, {1.0, 2.0}}), ArgumentError);
  CHECK_THROWS_AS(make_space({Param::nu}, {{1.0, 2.0}}, ModelConstants{.L = 0.0}), ArgumentError);

  const auto s = make_space({Param::nu}, {{1.0, 2.0}});
  auto fixed = s.fixed();
  fixed[Param::nu] = 1.5;
  CHECK_THROWS_AS(ParameterSpace({Param::nu}, {{1.0, 2.0}}, fixed), ArgumentError);
  fixed.erase(Param::nu);
  fixed.erase(Param::mu);
  CHECK_THROWS_AS(ParameterSpace({Param::nu}, {{1.0, 2.0}}, fixed), ArgumentError);
}

TEST_CASE("parameter names round trip") {
  for (Param p : kAllParams) CHECK(param_from_name(param_name(p)) == p);
  CHECK(!param_from_name("lambda").has_value());
}

TEST_CASE("substream seeds are stable and distinct") {
  CHECK(substream_seed(1, "a") == substream_seed(1, "a"));
  CHECK(substream_seed(1, "a") != substream_seed(1, "b"));
  CHECK(substream_seed(1, "a") != substream_seed(2, "a"));
}

}
