#pragma once

#include "chemouq/bayes.hpp"
#include "chemouq/model.hpp"
#include "chemouq/sparse_grid.hpp"
#include "chemouq/util.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chemouq::forward {

enum class Provenance { prior, ga, mcmc };
std::string to_string(Provenance p);

struct Ensemble {
  Provenance provenance = Provenance::prior;
  Eigen::MatrixXd samples;  // n x N, inside the box
  Eigen::MatrixXd values;   // n x n_times
  std::vector<double> times;
  std::size_t rejected = 0;  // input rows dropped for lying outside the box
};

// Uniform samples over the box.
Eigen::MatrixXd sample_prior(const ParameterSpace& space, std::size_t n, std::uint64_t seed);

// Batch surrogate evaluation of the in-box rows of `samples`.
Ensemble propagate(const sg::Surrogate& surrogate, const Eigen::MatrixXd& samples,
                   Provenance provenance);

struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  bool degenerate = false;  // all values identical; grid and density empty

  double integral() const;  // trapezoid rule over the grid
};

// Gaussian-kernel density estimate on n_grid points spanning [min, max]
// padded by three bandwidths. Bandwidth 1.06 sigma n^{-1/5} unless given.
// Throws ArgumentError for fewer than two values.
DensityEstimate kde(std::span<const double> values, std::size_t n_grid = 512,
                    std::optional<double> bandwidth = std::nullopt);

struct TimeStatistics {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> stddev;  // unbiased
  std::vector<double> cv;      // NaN where the mean is zero
};

// Throws ArgumentError for fewer than two samples.
TimeStatistics time_statistics(const Ensemble& ensemble);

struct ConcentrationSeries {
  std::vector<double> times;
  std::vector<double> cf;          // sigma_post / sigma_prior, NaN where sigma_prior = 0
  std::vector<double> cf_inverse;  // sigma_prior / sigma_post, NaN where sigma_post = 0
};

ConcentrationSeries concentration_series(const TimeStatistics& prior, const TimeStatistics& post);

// t,mean,std,cv[,cf,cf_inverse]
std::string statistics_csv(const TimeStatistics& stats, const ConcentrationSeries* cf = nullptr);
// t,x,density for each selected output column.
std::string kde_csv(const Ensemble& ensemble, const std::vector<std::size_t>& columns,
                    std::size_t n_grid = 512);

// Weighted Leja families centered at the GA mean. Each scale is the GA
// marginal std, capped so that the first `max_knots` knots stay within
// 0.45 |Gamma_n| of the mean (keeps training points physically admissible).
std::vector<sg::KnotFamily> leja_families(const bayes::GaussianPosterior& gp,
                                          const ParameterSpace& space, int max_knots);

} // namespace chemouq::forward
