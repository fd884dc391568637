#include "chemouq/forward_uq.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace chemouq;
using chemouq::testing::make_space;

namespace {

ParameterSpace box() { return make_space({Param::nu, Param::k_phi}, {{100.0, 300.0}, {400.0, 2000.0}}); }

sg::Surrogate affine_surrogate() {
  sg::Evaluator e = [](const ParameterVector& y) { return std::vector<double>{y[0], y[0] + 0.5 * y[1], 7.0}; };
  return sg::train(sg::build_grid(box(), 2), e, {"I", "", 0, {0.0, 900.0, 1800.0}});
}

} // namespace

TEST_SUITE("forward_uq") {

TEST_CASE("prior samples are uniform in the box and reproducible") {
  const auto s = forward::sample_prior(box(), 20000, 12);
  CHECK(s == forward::sample_prior(box(), 20000, 12));
  for (Eigen::Index r = 0; r < s.rows(); ++r) CHECK(box().contains(std::vector<double>{s(r, 0), s(r, 1)}));
  CHECK(s.col(0).mean() == doctest::Approx(200.0).epsilon(0.01));
  CHECK(s.col(1).mean() == doctest::Approx(1200.0).epsilon(0.01));
}

TEST_CASE("propagation drops rows outside the box") {
  Eigen::MatrixXd y(3, 2);
  y << 150, 500, 350, 500, 250, 1000;
  const auto e = forward::propagate(affine_surrogate(), y, forward::Provenance::ga);
  CHECK(e.rejected == 1);
  REQUIRE(e.values.rows() == 2);
  CHECK(e.values(0, 1) == doctest::Approx(400.0));
  CHECK(e.values(1, 1) == doctest::Approx(750.0));
  CHECK(e.times == std::vector<double>{0.0, 900.0, 1800.0});
  CHECK(forward::to_string(e.provenance) == "ga");
  CHECK_THROWS_AS(forward::propagate(affine_surrogate(), Eigen::MatrixXd::Zero(2, 3), forward::Provenance::prior),
                  ArgumentError);
}

TEST_CASE("time statistics and concentration factors") {
  const auto prior = forward::propagate(affine_surrogate(), forward::sample_prior(box(), 4000, 1),
                                        forward::Provenance::prior);
  const auto s = forward::time_statistics(prior);
  CHECK(s.stddev[0] == doctest::Approx(200.0 / std::sqrt(12.0)).epsilon(0.03));
  CHECK(s.stddev[2] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(s.cv[0] == doctest::Approx(s.stddev[0] / s.mean[0]));

  Eigen::MatrixXd narrow(2, 2);
  narrow << 190, 1200, 210, 1200;
  const auto post = forward::time_statistics(forward::propagate(affine_surrogate(), narrow, forward::Provenance::mcmc));
  const auto cf = forward::concentration_series(s, post);
  CHECK(cf.cf[0] == doctest::Approx(post.stddev[0] / s.stddev[0]));
  CHECK(cf.cf_inverse[0] == doctest::Approx(s.stddev[0] / post.stddev[0]));
  const forward::TimeStatistics flat{{0.0}, {1.0}, {0.0}, {0.0}};
  const forward::TimeStatistics spread{{0.0}, {1.0}, {2.0}, {2.0}};
  CHECK(std::isnan(forward::concentration_series(flat, spread).cf[0]));
  CHECK(std::isnan(forward::concentration_series(spread, flat).cf_inverse[0]));
  const auto csv = forward::statistics_csv(post, &cf);
  CHECK(csv.rfind("t,mean,std,cv,cf,cf_inverse\n", 0) == 0);
}

TEST_CASE("KDE integrates to one and follows the Silverman rule") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(3.0, 2.0);
  std::vector<double> v(5000);
  for (double& x : v) x = g(rng);
  const auto d = forward::kde(v, 512);
  CHECK(d.integral() == doctest::Approx(1.0).epsilon(0.01));
  double mean = 0.0, var = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  for (double x : v) var += (x - mean) * (x - mean);
  var /= v.size() - 1;
  CHECK(d.bandwidth == doctest::Approx(1.06 * std::sqrt(var) * std::pow(5000.0, -0.2)));
  // Peak close to the normal density at its mean.
  double peak = 0.0;
  for (double p : d.density) peak = std::max(peak, p);
  CHECK(peak == doctest::Approx(1.0 / (2.0 * std::sqrt(2.0 * std::numbers::pi))).epsilon(0.08));
  CHECK(d.grid.front() < *std::min_element(v.begin(), v.end()));
}

TEST_CASE("KDE edge cases") {
  const std::vector<double> same{2.0, 2.0, 2.0};
  CHECK(forward::kde(same).degenerate);
  CHECK(forward::kde(same, 64, 0.5).integral() == doctest::Approx(1.0).epsilon(0.01));
  CHECK_THROWS_AS(forward::kde(std::vector<double>{1.0}), ArgumentError);
  CHECK_THROWS_AS(forward::kde(std::vector<double>{1.0, 2.0}, 1), ArgumentError);
  CHECK_THROWS_AS(forward::kde(std::vector<double>{1.0, 2.0}, 8, -1.0), ArgumentError);
}

TEST_CASE("KDE csv covers the selected columns") {
  const auto e = forward::propagate(affine_surrogate(), forward::sample_prior(box(), 200, 2), forward::Provenance::prior);
  const auto csv = forward::kde_csv(e, {0, 1}, 16);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 16);
  CHECK_THROWS_AS(forward::kde_csv(e, {5}, 16), ArgumentError);
}

TEST_CASE("Leja families are centred at the posterior mean with capped spread") {
  bayes::GaussianPosterior gp;
  gp.mean = ParameterVector{200.0, 1000.0};
  gp.covariance = Eigen::MatrixXd::Zero(2, 2);
  gp.covariance(0, 0) = 25.0;
  gp.covariance(1, 1) = 1e8;
  const auto fam = forward::leja_families(gp, box(), 7);
  CHECK(fam[0].mean() == 200.0);
  CHECK(fam[0].stddev() == doctest::Approx(5.0));
  double reach = 0.0;
  for (double k : sg::knots_weighted_leja(7)) reach = std::max(reach, std::abs(k));
  CHECK(fam[1].stddev() * reach == doctest::Approx(0.45 * 1600.0));
}

}
