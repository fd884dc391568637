#include "chemouq/forward_uq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace chemouq::forward {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::prior: return "prior";
    case Provenance::ga: return "ga";
    case Provenance::mcmc: return "mcmc";
  }
  return "unknown";
}

Eigen::MatrixXd sample_prior(const ParameterSpace& space, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(space.dim()));
  for (Eigen::Index r = 0; r < s.rows(); ++r)
    for (std::size_t c = 0; c < space.dim(); ++c)
      s(r, static_cast<Eigen::Index>(c)) = space.range(c).lo + unif(rng) * space.range(c).width();
  return s;
}

Ensemble propagate(const sg::Surrogate& surrogate, const Eigen::MatrixXd& samples,
                   Provenance provenance) {
  const ParameterSpace& space = surrogate.space();
  if (static_cast<std::size_t>(samples.cols()) != space.dim())
    throw ArgumentError("propagate: samples have " + std::to_string(samples.cols()) +
                        " columns, surrogate has " + std::to_string(space.dim()));
  std::vector<Eigen::Index> keep;
  std::vector<double> y(space.dim());
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    for (std::size_t c = 0; c < y.size(); ++c) y[c] = samples(r, static_cast<Eigen::Index>(c));
    if (space.contains(y)) keep.push_back(r);
  }
  Ensemble e;
  e.provenance = provenance;
  e.rejected = static_cast<std::size_t>(samples.rows()) - keep.size();
  e.samples.resize(static_cast<Eigen::Index>(keep.size()), samples.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) e.samples.row(static_cast<Eigen::Index>(k)) = samples.row(keep[k]);
  e.values = surrogate.evaluate_batch(e.samples);
  e.times = surrogate.metadata().times;
  if (e.times.empty())
    for (std::size_t k = 0; k < surrogate.n_outputs(); ++k) e.times.push_back(static_cast<double>(k));
  return e;
}

double DensityEstimate::integral() const {
  double s = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k)
    s += 0.5 * (density[k] + density[k - 1]) * (grid[k] - grid[k - 1]);
  return s;
}

DensityEstimate kde(std::span<const double> values, std::size_t n_grid,
                    std::optional<double> bandwidth) {
  const std::size_t n = values.size();
  if (n < 2) throw ArgumentError("kde: need at least two values");
  if (n_grid < 2) throw ArgumentError("kde: need at least two grid points");
  DensityEstimate d;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (lo == hi && !bandwidth) {
    d.degenerate = true;
    return d;
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  d.bandwidth = bandwidth ? *bandwidth : 1.06 * std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
  if (!(d.bandwidth > 0.0)) throw ArgumentError("kde: bandwidth must be positive");

  const double a = lo - 3.0 * d.bandwidth, b = hi + 3.0 * d.bandwidth;
  d.grid.resize(n_grid);
  d.density.assign(n_grid, 0.0);
  for (std::size_t k = 0; k < n_grid; ++k)
    d.grid[k] = k + 1 == n_grid ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(n_grid - 1);
  const double norm = 1.0 / (static_cast<double>(n) * d.bandwidth * std::sqrt(2.0 * std::numbers::pi));
  const double inv_h = 1.0 / d.bandwidth;
  for (std::size_t k = 0; k < n_grid; ++k) {
    double s = 0.0;
    for (double v : values) {
      const double z = (d.grid[k] - v) * inv_h;
      if (z * z < 80.0) s += std::exp(-0.5 * z * z);
    }
    d.density[k] = s * norm;
  }
  return d;
}

TimeStatistics time_statistics(const Ensemble& e) {
  const auto n = e.values.rows();
  if (n < 2) throw ArgumentError("time_statistics: need at least two samples");
  TimeStatistics s;
  s.times = e.times;
  for (Eigen::Index c = 0; c < e.values.cols(); ++c) {
    const double m = e.values.col(c).mean();
    const double v = (e.values.col(c).array() - m).square().sum() / static_cast<double>(n - 1);
    s.mean.push_back(m);
    s.stddev.push_back(std::sqrt(v));
    s.cv.push_back(m == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(v) / std::abs(m));
  }
  return s;
}

ConcentrationSeries concentration_series(const TimeStatistics& prior, const TimeStatistics& post) {
  if (prior.stddev.size() != post.stddev.size())
    throw ArgumentError("concentration_series: time grids differ");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ConcentrationSeries c;
  c.times = prior.times;
  for (std::size_t k = 0; k < prior.stddev.size(); ++k) {
    c.cf.push_back(prior.stddev[k] > 0.0 ? post.stddev[k] / prior.stddev[k] : nan);
    c.cf_inverse.push_back(post.stddev[k] > 0.0 ? prior.stddev[k] / post.stddev[k] : nan);
  }
  return c;
}

std::string statistics_csv(const TimeStatistics& s, const ConcentrationSeries* cf) {
  std::ostringstream ss;
  ss << "t,mean,std,cv";
  if (cf) ss << ",cf,cf_inverse";
  ss << '\n';
  for (std::size_t k = 0; k < s.mean.size(); ++k) {
    ss << format_double(s.times[k]) << ',' << format_double(s.mean[k]) << ','
       << format_double(s.stddev[k]) << ',' << format_double(s.cv[k]);
    if (cf) ss << ',' << format_double(cf->cf[k]) << ',' << format_double(cf->cf_inverse[k]);
    ss << '\n';
  }
  return ss.str();
}

std::string kde_csv(const Ensemble& e, const std::vector<std::size_t>& columns, std::size_t n_grid) {
  std::ostringstream ss;
  ss << "t,x,density\n";
  for (std::size_t c : columns) {
    if (c >= static_cast<std::size_t>(e.values.cols())) throw ArgumentError("kde_csv: column out of range");
    const Eigen::VectorXd col = e.values.col(static_cast<Eigen::Index>(c));
    const auto d = kde(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), n_grid);
    for (std::size_t k = 0; k < d.grid.size(); ++k)
      ss << format_double(e.times[c]) << ',' << format_double(d.grid[k]) << ','
         << format_double(d.density[k]) << '\n';
  }
  return ss.str();
}

std::vector<sg::KnotFamily> leja_families(const bayes::GaussianPosterior& gp,
                                          const ParameterSpace& space, int max_knots) {
  if (gp.mean.size() != space.dim()) throw ArgumentError("leja_families: dimension mismatch");
  const auto knots = sg::knots_weighted_leja(max_knots);
  double reach = 0.0;
  for (double k : knots) reach = std::max(reach, std::abs(k));
  const auto sd = gp.stddev();
  std::vector<sg::KnotFamily> out;
  for (std::size_t n = 0; n < space.dim(); ++n) {
    double s = sd[n];
    if (reach > 0.0) s = std::min(s, 0.45 * space.range(n).width() / reach);
    if (!(s > 0.0)) s = 1e-6 * space.range(n).width();
    out.push_back(sg::KnotFamily::weighted_leja(gp.mean[n], s));
  }
  return out;
}

} // namespace chemouq::forward
