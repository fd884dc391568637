#include "chemouq/sensitivity.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace chemouq;
using chemouq::testing::make_space;

namespace {

ParameterSpace square() { return make_space({Param::mu, Param::nu}, {{-1.0, 1.0}, {-1.0, 1.0}}); }

sg::Surrogate surrogate_of(const ParameterSpace& space, int w,
                           const std::function<std::vector<double>(std::span<const double>)>& f,
                           std::vector<double> times) {
  sg::Evaluator e = [&](const ParameterVector& y) { return f(y.span()); };
  return sg::train(sg::build_grid(space, w), e, {"f", "", 0, std::move(times)});
}

} // namespace

TEST_SUITE("sensitivity") {

TEST_CASE("default reporting times") {
  CHECK(sensitivity::default_time_indices(256, 10) ==
        std::vector<std::size_t>{26, 51, 77, 102, 128, 154, 179, 205, 230, 256});
  CHECK(sensitivity::default_time_indices(4, 10) == std::vector<std::size_t>{1, 2, 3, 4});
  CHECK_THROWS_AS(sensitivity::default_time_indices(0), ArgumentError);
}

TEST_CASE("Sobol indices of an additive function") {
  const auto s = surrogate_of(square(), 3, [](auto y) { return std::vector<double>{3.0 * y[0] + y[1]}; }, {1.0});
  const auto idx = sensitivity::sobol_indices(s, {0});
  REQUIRE(idx.per_time.size() == 1);
  const auto& t = idx.per_time[0];
  CHECK(t.defined);
  CHECK(t.main[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(t.main[1] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(t.total[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(t.total[1] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(t.variance == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("Sobol indices of a pure interaction") {
  const auto s = surrogate_of(square(), 3, [](auto y) { return std::vector<double>{y[0] * y[1]}; }, {1.0});
  const auto idx = sensitivity::sobol_indices(s, {0});
  const auto& t = idx.per_time[0];
  CHECK(t.main[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.total[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.total[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Sobol properties on a mixed function") {
  const auto s = surrogate_of(
      square(), 5, [](auto y) { return std::vector<double>{y[0] + y[0] * y[1] + 0.5 * y[1] * y[1]}; }, {1.0});
  const auto idx = sensitivity::sobol_indices(s, {0});
  const auto& t = idx.per_time[0];
  double sum_main = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    CHECK(t.main[n] >= -1e-12);
    CHECK(t.main[n] <= t.total[n] + 1e-12);
    CHECK(t.total[n] <= 1.0 + 1e-12);
    sum_main += t.main[n];
  }
  CHECK(sum_main <= 1.0 + 1e-12);
}

TEST_CASE("constant output leaves Sobol indices undefined") {
  const auto s = surrogate_of(square(), 2, [](auto) { return std::vector<double>{4.0}; }, {1.0});
  const auto idx = sensitivity::sobol_indices(s, {0});
  const auto& t = idx.per_time[0];
  CHECK(!t.defined);
  CHECK(t.variance == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("Morris indices of a linear function are exact") {
  const auto space = make_space({Param::nu, Param::rho}, {{100.0, 300.0}, {1e-3, 4e-3}});
  sensitivity::Response f = [](std::span<const double> y) {
    Eigen::VectorXd v(2);
    v << 2.0 * y[0] - 500.0 * y[1], -y[0];
    return v;
  };
  const auto m = sensitivity::morris_indices(f, space, 1000, 17, {0.0, 1.0});
  CHECK(m.increments[0] == doctest::Approx(0.2));
  CHECK(m.per_time[0].m[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(m.per_time[0].m[1] == doctest::Approx(500.0).epsilon(1e-8));
  CHECK(m.per_time[0].m_bar[0] == doctest::Approx(2.0 / 502.0).epsilon(1e-8));
  CHECK(m.per_time[1].m_bar[0] == doctest::Approx(1.0));
  CHECK(m.per_time[1].m_bar[1] == doctest::Approx(0.0));
}

TEST_CASE("Morris steps stay inside the box") {
  const auto space = square();
  sensitivity::Response f = [&](std::span<const double> y) {
    if (!space.contains(y)) throw DomainError("left the box");
    return Eigen::VectorXd::Constant(1, y[0] * y[0]);
  };
  CHECK_NOTHROW(sensitivity::morris_indices(f, space, 2, 1, {0.0}));
}

TEST_CASE("Morris falls back to uniform weights for a constant response") {
  sensitivity::Response f = [](std::span<const double>) { return Eigen::VectorXd::Constant(1, 1.0); };
  const auto m = sensitivity::morris_indices(f, square(), 50, 2, {0.0});
  CHECK(m.per_time[0].uniform_fallback);
  CHECK(m.per_time[0].m_bar == std::vector<double>{0.5, 0.5});
}

TEST_CASE("Morris is reproducible for a seed") {
  const auto s = surrogate_of(square(), 3, [](auto y) { return std::vector<double>{y[0] * y[0] + y[1]}; }, {1.0});
  const auto a = sensitivity::morris_indices(s, 100, 5, {0});
  const auto b = sensitivity::morris_indices(s, 100, 5, {0});
  const auto c = sensitivity::morris_indices(s, 100, 6, {0});
  CHECK(a.per_time[0].m == b.per_time[0].m);
  CHECK(a.per_time[0].m != c.per_time[0].m);
}

TEST_CASE("relevance classification") {
  const auto s = surrogate_of(make_space({Param::mu, Param::nu, Param::rho}, {{-1, 1}, {-1, 1}, {-1, 1}}), 3,
                              [](auto y) { return std::vector<double>{y[0] + 0.1 * y[1] + 0.001 * y[2]}; },
                              {1.0});
  const auto sobol = sensitivity::sobol_indices(s, {0});
  const auto morris = sensitivity::morris_indices(s, 200, 3, {0});
  const auto r = sensitivity::classify_relevance(sobol, morris, 0.05);
  CHECK(r.relevant == std::vector<std::string>{"mu", "nu"});
  CHECK(r.negligible == std::vector<std::string>{"rho"});
  CHECK(r.score[2] < 0.05);
  const auto csv = sensitivity::indices_csv(sobol, morris);
  CHECK(csv.rfind("t,parameter,S,S_T,m,m_bar\n", 0) == 0);
}

TEST_CASE("response curves sweep one parameter with the rest pinned") {
  const auto space = make_space({Param::nu, Param::k_phi}, {{100.0, 300.0}, {400.0, 2000.0}});
  sensitivity::Response f = [](std::span<const double> y) { return Eigen::VectorXd::Constant(1, y[0] + y[1]); };
  const auto c = sensitivity::response_curves(f, space, 5, {1.0});
  CHECK(c.pinned == std::vector<double>{200.0, 1200.0});
  CHECK(c.sweep[0].front() == 100.0);
  CHECK(c.sweep[0].back() == 300.0);
  CHECK(c.values[0](0, 0) == doctest::Approx(1300.0));
  CHECK(c.values[1](4, 0) == doctest::Approx(2200.0));
  CHECK(c.csv().rfind("parameter,value,t,qoi\n", 0) == 0);
  CHECK_THROWS_AS(sensitivity::response_curves(f, space, 1, {1.0}), ArgumentError);
}

}
