#include "chemouq/bayes.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace chemouq;
using chemouq::testing::make_space;

namespace {

constexpr int kNt = 32;

ParameterSpace linear_space() { return make_space({Param::nu, Param::rho}, {{100.0, 300.0}, {1e-3, 4e-3}}); }

// M(t) = 750 - 0.2 nu s - 2e4 rho s^2 with s = t / T.
std::vector<double> linear_model(std::span<const double> y) {
  std::vector<double> v;
  for (int n = 0; n <= kNt; ++n) {
    const double s = static_cast<double>(n) / kNt;
    v.push_back(750.0 - 0.2 * y[0] * s - 2e4 * y[1] * s * s);
  }
  return v;
}

sg::Surrogate linear_surrogate() {
  std::vector<double> times;
  for (int n = 0; n <= kNt; ++n) times.push_back(1800.0 * n / kNt);
  sg::Evaluator e = [](const ParameterVector& y) { return linear_model(y.span()); };
  return sg::train(sg::build_grid(linear_space(), 2), e, {"M", "", 0, times});
}

bayes::DataSet linear_data(const std::vector<double>& y_true, double noise, std::uint64_t seed) {
  bayes::DataSet d;
  d.time_indices = bayes::observation_indices(kNt, 8);
  d.n_t = kNt;
  d.noise_std = noise;
  d.y_true = ParameterVector(y_true);
  const auto m = linear_model(y_true);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i : d.time_indices) {
    d.times.push_back(1800.0 * static_cast<double>(i) / kNt);
    d.values.push_back(m[i] + noise * g(rng));
  }
  return d;
}

Eigen::MatrixXd linear_jacobian(const bayes::DataSet& d) {
  Eigen::MatrixXd J(static_cast<Eigen::Index>(d.size()), 2);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double s = d.times[k] / 1800.0;
    J(static_cast<Eigen::Index>(k), 0) = -0.2 * s;
    J(static_cast<Eigen::Index>(k), 1) = -2e4 * s * s;
  }
  return J;
}

} // namespace

TEST_SUITE("bayes") {

TEST_CASE("observation indices") {
  const auto idx = bayes::observation_indices(256, 30);
  REQUIRE(idx.size() == 30);
  CHECK(idx.front() == 9);
  CHECK(idx[14] == 128);
  CHECK(idx.back() == 256);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK_THROWS_AS(bayes::observation_indices(10, 11), ArgumentError);
}

TEST_CASE("synthetic data at the reference setting is frozen") {
  const auto d = bayes::generate_data(reduced_space_4d(), {200.0, 1300.0, 25e-4, 250.0}, 30, 2.0, 42, 128, 256);
  REQUIRE(d.size() == 30);
  CHECK(d.values[0] == doctest::Approx(738.3947899369557).epsilon(1e-10));
  CHECK(d.values[29] == doctest::Approx(513.11300570592414).epsilon(1e-10));
  CHECK(d.times.back() == doctest::Approx(1800.0));
  CHECK(d.csv().rfind("k,t,M\n1,", 0) == 0);
  CHECK_THROWS_AS(bayes::generate_data(reduced_space_4d(), {50.0, 1300.0, 25e-4, 250.0}, 30, 2.0, 42, 16, 32),
                  DomainError);
}

TEST_CASE("noise is reproducible and seed dependent") {
  const ParameterVector y{200.0, 1300.0, 25e-4, 250.0};
  const auto a = bayes::generate_data(reduced_space_4d(), y, 8, 2.0, 1, 16, 32);
  const auto b = bayes::generate_data(reduced_space_4d(), y, 8, 2.0, 1, 16, 32);
  const auto c = bayes::generate_data(reduced_space_4d(), y, 8, 2.0, 2, 16, 32);
  const auto clean = bayes::generate_data(reduced_space_4d(), y, 8, 0.0, 1, 16, 32);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  double ss = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) ss += std::pow(a.values[k] - clean.values[k], 2);
  CHECK(std::sqrt(ss / 8.0) < 6.0);
}

TEST_CASE("misfit") {
  const auto d = linear_data({180.0, 2e-3}, 0.0, 1);
  const bayes::Misfit m(linear_surrogate(), d);
  CHECK(m.n_observations() == 8);
  CHECK(m.sum_squares(std::vector<double>{180.0, 2e-3}) == doctest::Approx(0.0).epsilon(1e-16));
  CHECK(std::isinf(m.sum_squares(std::vector<double>{50.0, 2e-3})));
  CHECK(bayes::neg_log_posterior(m, std::vector<double>{181.0, 2e-3}, 2.0) > 0.0);
  CHECK_THROWS_AS(bayes::neg_log_posterior(m, std::vector<double>{181.0, 2e-3}, 0.0), ArgumentError);

  auto bad = d;
  bad.times[0] += 1.0;
  CHECK_THROWS_AS(bayes::Misfit(linear_surrogate(), bad), IncompatibleError);
  bad = d;
  bad.time_indices.back() = 99;
  CHECK_THROWS_AS(bayes::Misfit(linear_surrogate(), bad), IncompatibleError);
}

TEST_CASE("Nelder-Mead minimizes the Rosenbrock function") {
  auto f = [](std::span<const double> x) { return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2); };
  bayes::NelderMeadOptions o;
  o.max_iterations = 5000;
  o.tolerance = 1e-10;
  const auto r = bayes::nelder_mead(f, {-1.2, 1.0}, {1.0, 1.0}, o);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("MAP recovers the truth of a noise-free linear problem") {
  const auto d = linear_data({180.0, 2e-3}, 0.0, 1);
  const bayes::Misfit m(linear_surrogate(), d);
  const auto map = bayes::map_estimate(m, 5, 9);
  CHECK(map.y[0] == doctest::Approx(180.0).epsilon(1e-5));
  CHECK(map.y[1] == doctest::Approx(2e-3).epsilon(1e-5));
  CHECK(map.objective < 1e-8);
  const auto again = bayes::map_estimate(m, 5, 9, 2);
  CHECK(again.y == map.y);
}

TEST_CASE("Gaussian approximation of a linear problem is exact") {
  const auto d = linear_data({180.0, 2e-3}, 1.5, 4);
  const bayes::Misfit m(linear_surrogate(), d);
  const auto map = bayes::map_estimate(m, 5, 3);
  const double sigma = bayes::noise_estimate(m, map.y);
  CHECK(sigma == doctest::Approx(std::sqrt(map.objective / 8.0)));
  const auto gp = bayes::gaussian_posterior(m, map.y, sigma);
  const Eigen::MatrixXd J = linear_jacobian(d);
  const Eigen::MatrixXd expected = sigma * sigma * (J.transpose() * J).inverse();
  CHECK((gp.jacobian - J).norm() < 1e-6 * J.norm());
  CHECK((gp.covariance - expected).norm() < 1e-6 * expected.norm());
  CHECK(gp.stddev()[0] == doctest::Approx(std::sqrt(expected(0, 0))).epsilon(1e-6));
}

TEST_CASE("rank-deficient Jacobian reports the null direction") {
  Eigen::MatrixXd J(3, 2);
  J << 1, 2, 2, 4, -1, -2;
  try {
    bayes::gaussian_posterior(J, ParameterVector{0.0, 0.0}, 1.0);
    FAIL("expected IllPosedError");
  } catch (const bayes::IllPosedError& e) {
    const Eigen::VectorXd v = e.null_direction();
    CHECK((J * v).norm() < 1e-10);
    CHECK(v.norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("Gaussian samples stay in the box") {
  bayes::GaussianPosterior gp;
  gp.mean = ParameterVector{290.0, 2e-3};
  gp.covariance = Eigen::MatrixXd::Zero(2, 2);
  gp.covariance(0, 0) = 400.0;
  gp.covariance(1, 1) = 1e-8;
  const auto s = bayes::sample_gaussian(gp, 2000, 5, linear_space());
  CHECK(s.samples.rows() == 2000);
  for (Eigen::Index r = 0; r < s.samples.rows(); ++r)
    CHECK(linear_space().contains(std::vector<double>{s.samples(r, 0), s.samples(r, 1)}));
  CHECK(s.rejected > 0);
  CHECK(!s.high_rejection);
  const auto t = bayes::sample_gaussian(gp, 2000, 5, linear_space());
  CHECK(t.samples == s.samples);
}

TEST_CASE("slice sampler recovers a correlated Gaussian") {
  Eigen::Matrix2d C;
  C << 1.0, 0.6, 0.6, 0.5;
  const Eigen::Matrix2d P = C.inverse();
  const Eigen::Vector2d mu(1.0, -2.0);
  bayes::LogDensity logp = [&](std::span<const double> x) {
    const Eigen::Vector2d d(x[0] - mu(0), x[1] - mu(1));
    return -0.5 * d.dot(P * d);
  };
  bayes::SliceOptions o;
  o.n_retain = 5000;
  o.burnin = 500;
  o.thin = 10;
  o.widths = {1.0, 1.0};
  const auto chain = bayes::slice_sample(logp, {0.0, 0.0}, o, 77);
  REQUIRE(chain.samples.rows() == 5000);
  CHECK(chain.raw_sweeps == 500 + 5000 * 10);
  const Eigen::RowVector2d mean = chain.samples.colwise().mean();
  CHECK(std::abs(mean(0) - mu(0)) < 0.05);
  CHECK(std::abs(mean(1) - mu(1)) < 0.05);
  const Eigen::MatrixXd centered = chain.samples.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / (chain.samples.rows() - 1.0);
  CHECK((cov - C).norm() / C.norm() < 0.1);
  const auto acf = bayes::autocorrelation(chain.samples, 20);
  for (Eigen::Index l = 5; l <= 20; ++l)
    for (Eigen::Index c = 0; c < 2; ++c) CHECK(std::abs(acf.values(l, c)) < 0.2);
}

TEST_CASE("slice sampler input checks") {
  bayes::LogDensity flat = [](std::span<const double>) { return 0.0; };
  bayes::LogDensity never = [](std::span<const double>) { return -std::numeric_limits<double>::infinity(); };
  bayes::SliceOptions o;
  o.widths = {1.0};
  CHECK_THROWS_AS(bayes::slice_sample(never, {0.0}, o, 1), ArgumentError);
  o.widths = {};
  CHECK_THROWS_AS(bayes::slice_sample(flat, {0.0}, o, 1), ArgumentError);
  o.widths = {-1.0};
  CHECK_THROWS_AS(bayes::slice_sample(flat, {0.0}, o, 1), ArgumentError);
}

TEST_CASE("slice sampler on the surrogate posterior stays in the box and is reproducible") {
  const auto d = linear_data({180.0, 2e-3}, 1.0, 2);
  const bayes::Misfit m(linear_surrogate(), d);
  bayes::SliceOptions o;
  o.n_retain = 200;
  o.burnin = 20;
  o.thin = 2;
  const auto a = bayes::slice_sample(m, 1.0, ParameterVector{180.0, 2e-3}, o, 3);
  const auto b = bayes::slice_sample(m, 1.0, ParameterVector{180.0, 2e-3}, o, 3);
  CHECK(a.samples == b.samples);
  for (Eigen::Index r = 0; r < a.samples.rows(); ++r)
    CHECK(m.space().contains(std::vector<double>{a.samples(r, 0), a.samples(r, 1)}));
  CHECK(a.csv({"nu", "rho"}).rfind("nu,rho\n", 0) == 0);
}

TEST_CASE("autocorrelation") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(4000, 2);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x(r, 0) = g(rng);
    x(r, 1) = 3.0;
  }
  const auto a = bayes::autocorrelation(x, 10);
  CHECK(a.values(0, 0) == doctest::Approx(1.0));
  for (Eigen::Index l = 1; l <= 10; ++l) CHECK(std::abs(a.values(l, 0)) < 0.06);
  CHECK(a.degenerate == std::vector<bool>{false, true});
  CHECK_THROWS_AS(bayes::autocorrelation(x, 4000), ArgumentError);
}

TEST_CASE("correlation matrix") {
  Eigen::MatrixXd x(5, 3);
  x << 1, -2, 7, 2, -4, 7, 3, -6, 7, 4, -8, 7, 5, -10, 7;
  const auto c = bayes::correlation_matrix(x);
  CHECK(c.R(0, 1) == doctest::Approx(-1.0));
  CHECK(c.R(0, 0) == doctest::Approx(1.0));
  CHECK(c.degenerate[2]);
  CHECK(std::isnan(c.R(0, 2)));
  CHECK(c.R(2, 2) == 1.0);
}

TEST_CASE("prior statistics and concentration factors") {
  const auto p = bayes::prior_stats(linear_space());
  CHECK(p.mean[0] == doctest::Approx(200.0));
  CHECK(p.stddev[0] == doctest::Approx(200.0 / std::sqrt(12.0)));
  bayes::MarginalStats post{{200.0, 0.0}, {p.stddev[0] / 4.0, 0.0}};
  const auto c = bayes::concentration(p, post);
  CHECK(c.cf[0] == doctest::Approx(0.25));
  CHECK(c.cf_inverse[0] == doctest::Approx(4.0));
  CHECK(c.cv_undefined[1]);
  CHECK(std::isnan(c.cv_post[1]));
  CHECK(std::isnan(c.cf_inverse[1]));
  const auto csv = bayes::concentration_csv({"nu", "rho"}, p, post, c);
  CHECK(csv.rfind("parameter,prior_mean,prior_std,post_mean,post_std,cv_prior,cv_post,cf,cf_inverse\n", 0) == 0);
}

TEST_CASE("sample statistics") {
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 4;
  const auto s = bayes::sample_stats(x);
  CHECK(s.mean[0] == doctest::Approx(2.5));
  CHECK(s.stddev[0] == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

}
