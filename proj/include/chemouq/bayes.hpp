#pragma once

#include "chemouq/hdg.hpp"
#include "chemouq/model.hpp"
#include "chemouq/sparse_grid.hpp"
#include "chemouq/util.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace chemouq::bayes {

// Synthetic observations of the center of mass M.
struct DataSet {
  std::vector<std::size_t> time_indices;  // on the solver grid, strictly increasing
  std::vector<double> times;
  std::vector<double> values;
  double noise_std = 0.0;
  ParameterVector y_true;
  std::uint64_t seed = 0;
  int n_t = 0;

  std::size_t size() const { return values.size(); }
  std::string csv() const;  // k,t,M
};

// Observation k (1..K) is taken at grid index round(k n_t / K).
std::vector<std::size_t> observation_indices(int n_t, std::size_t K);

// Direct HDG solve at y_true plus seeded i.i.d. N(0, sigma^2) noise.
// Throws DomainError when y_true lies outside the box.
DataSet generate_data(const ParameterSpace& space, const ParameterVector& y_true, std::size_t K,
                      double sigma, std::uint64_t seed, int n_s, int n_t,
                      const hdg::SolverOptions& opts = {});

// Least-squares misfit between the data and the M-surrogate.
class Misfit {
public:
  // Throws IncompatibleError when the surrogate has no output at a data time.
  Misfit(const sg::Surrogate& surrogate_m, const DataSet& data);

  const ParameterSpace& space() const { return model_.space(); }
  const DataSet& data() const { return data_; }
  std::size_t n_observations() const { return data_.size(); }

  Eigen::VectorXd model(std::span<const double> y) const;
  Eigen::VectorXd residuals(std::span<const double> y) const;  // M* - M_S
  // Sum of squared residuals; +infinity outside the box.
  double sum_squares(std::span<const double> y) const;

private:
  sg::Surrogate model_;
  DataSet data_;
  Eigen::VectorXd observed_;
};

// sum_squares / (2 sigma^2), +infinity outside the box.
double neg_log_posterior(const Misfit& misfit, std::span<const double> y, double sigma);

struct NelderMeadOptions {
  double initial_step = 0.05;   // fraction of each coordinate scale
  double tolerance = 1e-8;      // simplex diameter in scaled coordinates
  std::size_t max_iterations = 2000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Minimizes f in coordinates scaled by `scale` (x / scale), with the
// standard coefficients (1, 2, 0.5, 0.5).
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, const std::vector<double>& scale,
                             const NelderMeadOptions& opts = {});

class OptimizationError : public Error {
public:
  using Error::Error;
};

struct MapResult {
  ParameterVector y;
  double objective = 0.0;  // sum of squares at y
  std::size_t restarts = 0;
  std::size_t improved = 0;
};

// Best of n_starts Nelder-Mead runs from uniform random starts. `first_start`
// replaces the first random start when given. Throws OptimizationError when
// no run improves on its start.
MapResult map_estimate(const Misfit& misfit, std::size_t n_starts, std::uint64_t seed,
                       unsigned workers = 1, const ParameterVector* first_start = nullptr,
                       const NelderMeadOptions& opts = {});

// sqrt(sum_squares(y_map) / K).
double noise_estimate(const Misfit& misfit, const ParameterVector& y_map);

class IllPosedError : public Error {
public:
  IllPosedError(const std::string& what, Eigen::VectorXd null_direction)
      : Error(what), null_direction_(std::move(null_direction)) {}
  const Eigen::VectorXd& null_direction() const { return null_direction_; }

private:
  Eigen::VectorXd null_direction_;
};

// Finite-difference Jacobian of the surrogate model at y: central with
// delta_n = 1e-4 |Gamma_n|, one-sided where a central step would leave the box.
Eigen::MatrixXd model_jacobian(const Misfit& misfit, std::span<const double> y);

struct GaussianPosterior {
  ParameterVector mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd jacobian;
  double sigma = 0.0;

  std::vector<double> stddev() const;
  std::string text(const std::vector<std::string>& names) const;
};

// Sigma_post = sigma^2 (J^T J)^{-1}. Throws IllPosedError with the null
// direction when J is numerically rank deficient.
GaussianPosterior gaussian_posterior(const Misfit& misfit, const ParameterVector& y_map,
                                     double sigma);
GaussianPosterior gaussian_posterior(const Eigen::MatrixXd& jacobian, const ParameterVector& y_map,
                                     double sigma);

struct GaussianSamples {
  Eigen::MatrixXd samples;  // n x N, all inside the box
  std::size_t rejected = 0;
  bool high_rejection = false;  // more than half of the draws were rejected
};

// Cholesky sampling, redrawing samples that fall outside the box.
GaussianSamples sample_gaussian(const GaussianPosterior& gp, std::size_t n, std::uint64_t seed,
                                const ParameterSpace& space);

using LogDensity = std::function<double(std::span<const double>)>;

struct SliceOptions {
  std::size_t n_retain = 6000;
  std::size_t burnin = 2000;
  std::size_t thin = 100;
  std::vector<double> widths;   // per coordinate; empty = |Gamma_n| / 10 via slice_sample(space, ...)
  std::size_t max_steps_out = 50;
};

struct Chain {
  Eigen::MatrixXd samples;  // n_retain x N
  std::size_t burnin = 0;
  std::size_t thin = 1;
  std::size_t raw_sweeps = 0;
  std::size_t evaluations = 0;
  std::uint64_t seed = 0;

  std::string csv(const std::vector<std::string>& names) const;
};

// Coordinate-wise slice sampling with stepping-out and shrinkage. Runs
// burnin + n_retain * thin sweeps and keeps every thin-th sweep after the
// burn-in. Throws ArgumentError when logpost(start) is not finite or the
// widths are missing or non-positive.
Chain slice_sample(const LogDensity& logpost, const std::vector<double>& start,
                   const SliceOptions& opts, std::uint64_t seed);
// Posterior exp(-neg_log_posterior) with default widths |Gamma_n| / 10.
Chain slice_sample(const Misfit& misfit, double sigma, const ParameterVector& start,
                   SliceOptions opts, std::uint64_t seed);

struct Autocorrelation {
  Eigen::MatrixXd values;      // (max_lag + 1) x N
  std::vector<bool> degenerate;  // zero-variance coordinates (series set to 0)
};

// Biased sample autocorrelation per column. Throws ArgumentError unless
// max_lag < number of rows.
Autocorrelation autocorrelation(const Eigen::MatrixXd& samples, std::size_t max_lag);

struct Correlation {
  Eigen::MatrixXd R;
  std::vector<bool> degenerate;  // rows/columns set to NaN except the unit diagonal
};

Correlation correlation_matrix(const Eigen::MatrixXd& samples);

struct MarginalStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

MarginalStats prior_stats(const ParameterSpace& space);  // uniform: (a+b)/2, (b-a)/sqrt(12)
MarginalStats sample_stats(const Eigen::MatrixXd& samples);  // unbiased std

struct Concentration {
  std::vector<double> cv_prior;
  std::vector<double> cv_post;
  std::vector<double> cf;          // sigma_post / sigma_prior
  std::vector<double> cf_inverse;  // sigma_prior / sigma_post
  std::vector<bool> cv_undefined;  // zero mean; CV reported as NaN
};

Concentration concentration(const MarginalStats& prior, const MarginalStats& post);
// parameter,prior_mean,prior_std,post_mean,post_std,cv_prior,cv_post,cf,cf_inverse
std::string concentration_csv(const std::vector<std::string>& names, const MarginalStats& prior,
                              const MarginalStats& post, const Concentration& c);

} // namespace chemouq::bayes
