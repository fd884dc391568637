#include "chemouq/hdg.hpp"
#include "chemouq/model.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

using namespace chemouq;

namespace {

double max_rel_I_error(const ModelParameters& p, int n_s, int n_t) {
  const auto q = hdg::solve_qois(p, n_s, n_t);
  double e = 0.0;
  for (std::size_t k = 1; k < q.total_chemoattractant.times.size(); ++k) {
    const double exact = closed_form_I(p, q.total_chemoattractant.times[k]);
    e = std::max(e, std::abs(exact - q.total_chemoattractant.values[k]) / exact);
  }
  return e;
}

ModelParameters symmetric_box() {
  ModelParameters p;
  p.L = 1500.0;
  p.c_u0 = 750.0;
  return p;
}

} // namespace

TEST_SUITE("hdg") {

TEST_CASE("mesh") {
  const hdg::Mesh m(1000.0, 8);
  CHECK(m.n_nodes() == 9);
  CHECK(m.h() == doctest::Approx(125.0));
  CHECK(m.node(0) == 0.0);
  CHECK(m.node(8) == doctest::Approx(1000.0));
  CHECK_THROWS_AS(hdg::Mesh(1000.0, 0), ArgumentError);
}

TEST_CASE("quantities of interest at nominal parameters are frozen") {
  const auto q = hdg::solve_qois(ModelParameters{}, 64, 64);
  REQUIRE(q.center_of_mass.values.size() == 65);
  CHECK(q.center_of_mass.values.front() == doctest::Approx(750.0).epsilon(1e-9));
  CHECK(q.center_of_mass.values.back() == doctest::Approx(516.46170643224525).epsilon(1e-9));
  CHECK(q.total_chemoattractant.values.front() == 0.0);
  CHECK(q.total_chemoattractant.values.back() == doctest::Approx(430391.40596396982).epsilon(1e-9));
  CHECK(q.immune_mass.values.back() == doctest::Approx(49.999308250953256).epsilon(1e-12));
}

TEST_CASE("immune mass is conserved to round-off") {
  const auto space = default_space_6d();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    ParameterVector y;
    for (const auto& r : space.ranges()) y.values.push_back(r.lo + u(rng) * r.width());
    const auto q = hdg::solve_qois(space.resolve(y), 32, 64);
    const double u0 = q.immune_mass.values.front();
    for (double v : q.immune_mass.values) CHECK(std::abs(v / u0 - 1.0) < 1e-10);
  }
}

TEST_CASE("without chemotaxis a centred profile keeps its centre") {
  auto p = symmetric_box();
  p.chi = 0.0;
  const auto q = hdg::solve_qois(p, 60, 32);
  for (double m : q.center_of_mass.values) CHECK(m == doctest::Approx(750.0).epsilon(1e-10));
}

TEST_CASE("a source at the centre keeps the centre of mass by symmetry") {
  auto p = symmetric_box();
  p.c_phi = 750.0;
  const auto q = hdg::solve_qois(p, 60, 32);
  for (double m : q.center_of_mass.values) CHECK(m == doctest::Approx(750.0).epsilon(1e-9));
}

TEST_CASE("zero source amplitude gives no chemoattractant and no drift from chi") {
  ModelParameters p;
  p.k_phi = 0.0;
  auto q_chi = hdg::solve_qois(p, 32, 32);
  p.chi = 0.0;
  auto q_free = hdg::solve_qois(p, 32, 32);
  for (double v : q_chi.total_chemoattractant.values) CHECK(v == 0.0);
  for (std::size_t k = 0; k < q_chi.center_of_mass.values.size(); ++k)
    CHECK(q_chi.center_of_mass.values[k] == doctest::Approx(q_free.center_of_mass.values[k]).epsilon(1e-12));
}

TEST_CASE("chemotaxis pulls cells towards the source") {
  ModelParameters p;
  auto with = hdg::solve_qois(p, 64, 64).center_of_mass.values.back();
  p.chi = 0.0;
  auto without = hdg::solve_qois(p, 64, 64).center_of_mass.values.back();
  CHECK(with < without);
}

TEST_CASE("I error is first order in time") {
  const ModelParameters p;
  const double e1 = max_rel_I_error(p, 256, 64);
  const double e2 = max_rel_I_error(p, 256, 128);
  const double e3 = max_rel_I_error(p, 256, 256);
  CHECK(std::log2(e1 / e2) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::log2(e2 / e3) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("monolithic and sequential coupling agree") {
  ModelParameters p;
  hdg::SolverOptions seq, mono;
  mono.coupling = hdg::CouplingMode::monolithic;
  mono.newton_tol = seq.newton_tol = 1e-10;
  mono.newton_max_iter = seq.newton_max_iter = 30;
  const auto a = hdg::solve_qois(p, 32, 32, seq);
  const auto b = hdg::solve_qois(p, 32, 32, mono);
  for (std::size_t k = 0; k < a.center_of_mass.values.size(); ++k) {
    CHECK(a.center_of_mass.values[k] == doctest::Approx(b.center_of_mass.values[k]).epsilon(1e-6));
    CHECK(a.total_chemoattractant.values[k] == doctest::Approx(b.total_chemoattractant.values[k]).epsilon(1e-8));
  }
}

TEST_CASE("streaming QoIs match the stored trajectory") {
  const ModelParameters p;
  const auto traj = hdg::solve(p, 16, 16);
  const auto q = hdg::solve_qois(p, 16, 16);
  const auto m = hdg::qoi_center_of_mass(traj);
  const auto i = hdg::qoi_total_chemoattractant(traj);
  REQUIRE(traj.states.size() == 17);
  REQUIRE(traj.steps.size() == 16);
  for (std::size_t k = 0; k < m.values.size(); ++k) {
    CHECK(m.values[k] == q.center_of_mass.values[k]);
    CHECK(i.values[k] == q.total_chemoattractant.values[k]);
  }
}

TEST_CASE("trajectory file round trip") {
  const auto traj = hdg::solve(ModelParameters{}, 8, 4);
  const auto path = (std::filesystem::temp_directory_path() / "chemouq_traj_test.bin").string();
  hdg::write_trajectory(traj, path);
  const auto back = hdg::read_trajectory(path);
  std::filesystem::remove(path);
  CHECK(back.mesh.n_elements() == 8);
  REQUIRE(back.states.size() == traj.states.size());
  CHECK(back.times == traj.times);
  for (std::size_t n = 0; n < traj.states.size(); ++n)
    for (std::size_t e = 0; e < traj.states[n].elements.size(); ++e) {
      CHECK(back.states[n].elements[e].u == traj.states[n].elements[e].u);
      CHECK(back.states[n].elements[e].phi == traj.states[n].elements[e].phi);
    }
  CHECK(hdg::qoi_center_of_mass(back).values == hdg::qoi_center_of_mass(traj).values);
}

TEST_CASE("qoi csv") {
  hdg::QoiSeries s{{0.0, 0.5}, {1.0, 2.5}};
  CHECK(hdg::qoi_csv(s) == "t,value\n0,1\n0.5,2.5\n");
}

TEST_CASE("solver options validation") {
  hdg::SolverOptions o;
  CHECK_NOTHROW(o.validate());
  o.tau_u = 0.0;
  CHECK_THROWS_AS(o.validate(), ArgumentError);
  o = {};
  o.newton_tol = -1.0;
  CHECK_THROWS_AS(o.validate(), ArgumentError);
  CHECK(hdg::coupling_from_string("monolithic") == hdg::CouplingMode::monolithic);
  CHECK_THROWS_AS(hdg::coupling_from_string("staggered"), ArgumentError);
  CHECK(hdg::SolverOptions{}.canonical() != o.canonical());
}

TEST_CASE("invalid resolutions are rejected") {
  CHECK_THROWS_AS(hdg::solve_qois(ModelParameters{}, 0, 8), ArgumentError);
  CHECK_THROWS_AS(hdg::solve_qois(ModelParameters{}, 8, 0), ArgumentError);
}

}
