#include "chemouq/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace chemouq::bayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

std::vector<std::size_t> observation_indices(int n_t, std::size_t K) {
  if (K == 0) throw ArgumentError("observation_indices: K must be >= 1");
  if (n_t < 1 || K > static_cast<std::size_t>(n_t))
    throw ArgumentError("observation_indices: more observations than solver time steps");
  std::vector<std::size_t> idx;
  for (std::size_t k = 1; k <= K; ++k)
    idx.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(k) * n_t / static_cast<double>(K))));
  return idx;
}

std::string DataSet::csv() const {
  std::ostringstream ss;
  ss << "k,t,M\n";
  for (std::size_t k = 0; k < values.size(); ++k)
    ss << k + 1 << ',' << format_double(times[k]) << ',' << format_double(values[k]) << '\n';
  return ss.str();
}

DataSet generate_data(const ParameterSpace& space, const ParameterVector& y_true, std::size_t K,
                      double sigma, std::uint64_t seed, int n_s, int n_t,
                      const hdg::SolverOptions& opts) {
  if (!space.contains(y_true)) throw DomainError("generate_data: y_true outside the parameter box");
  if (sigma < 0.0) throw ArgumentError("generate_data: negative noise level");
  DataSet d;
  d.time_indices = observation_indices(n_t, K);
  d.noise_std = sigma;
  d.y_true = y_true;
  d.seed = seed;
  d.n_t = n_t;
  const auto qoi = hdg::solve_qois(space.resolve(y_true), n_s, n_t, opts);
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t idx : d.time_indices) {
    d.times.push_back(qoi.center_of_mass.times[idx]);
    const double eps = noise(rng);
    d.values.push_back(qoi.center_of_mass.values[idx] + sigma * eps);
  }
  return d;
}

namespace {

sg::Surrogate restrict_to_data(const sg::Surrogate& s, const DataSet& d) {
  for (std::size_t k = 0; k < d.time_indices.size(); ++k) {
    const std::size_t idx = d.time_indices[k];
    if (idx >= s.n_outputs())
      throw IncompatibleError("misfit: surrogate has no output at observation index " +
                              std::to_string(idx));
    const auto& t = s.metadata().times;
    if (!t.empty() && std::abs(t[idx] - d.times[k]) > 1e-9 * std::max(1.0, std::abs(d.times[k])))
      throw IncompatibleError("misfit: surrogate time grid differs from the observation times");
  }
  return s.restrict_outputs(d.time_indices);
}

} // namespace

Misfit::Misfit(const sg::Surrogate& surrogate_m, const DataSet& data)
    : model_(restrict_to_data(surrogate_m, data)), data_(data),
      observed_(Eigen::Map<const Eigen::VectorXd>(data.values.data(),
                                                  static_cast<Eigen::Index>(data.values.size()))) {
  if (data_.values.empty()) throw ArgumentError("misfit: empty data set");
}

Eigen::VectorXd Misfit::model(std::span<const double> y) const { return model_.evaluate(y); }

Eigen::VectorXd Misfit::residuals(std::span<const double> y) const {
  return observed_ - model_.evaluate(y);
}

double Misfit::sum_squares(std::span<const double> y) const {
  if (!space().contains(y)) return kInf;
  return residuals(y).squaredNorm();
}

double neg_log_posterior(const Misfit& misfit, std::span<const double> y, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("neg_log_posterior: sigma must be positive");
  const double ss = misfit.sum_squares(y);
  if (!std::isfinite(ss)) return kInf;
  return ss / (2.0 * sigma * sigma);
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> x0, const std::vector<double>& scale,
                             const NelderMeadOptions& opts) {
  const std::size_t N = x0.size();
  if (N == 0 || scale.size() != N) throw ArgumentError("nelder_mead: dimension mismatch");
  // Work in scaled coordinates z = x / scale.
  std::vector<double> buf(N);
  auto eval = [&](const Eigen::VectorXd& z) {
    for (std::size_t n = 0; n < N; ++n) buf[n] = z(static_cast<Eigen::Index>(n)) * scale[n];
    const double v = f(buf);
    return std::isnan(v) ? kInf : v;
  };

  std::vector<Eigen::VectorXd> simplex(N + 1, Eigen::VectorXd(static_cast<Eigen::Index>(N)));
  for (std::size_t n = 0; n < N; ++n) simplex[0](static_cast<Eigen::Index>(n)) = x0[n] / scale[n];
  for (std::size_t k = 1; k <= N; ++k) {
    simplex[k] = simplex[0];
    simplex[k](static_cast<Eigen::Index>(k - 1)) += opts.initial_step;
  }
  std::vector<double> fv(N + 1);
  for (std::size_t k = 0; k <= N; ++k) fv[k] = eval(simplex[k]);
  // Vertices stepping outside the feasible set get +inf; flip them once so
  // a start on the boundary still has a usable simplex.
  for (std::size_t k = 1; k <= N; ++k)
    if (!std::isfinite(fv[k])) {
      simplex[k](static_cast<Eigen::Index>(k - 1)) -= 2.0 * opts.initial_step;
      fv[k] = eval(simplex[k]);
    }

  std::vector<std::size_t> order(N + 1);
  NelderMeadResult res;
  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    {
      std::vector<Eigen::VectorXd> s2;
      std::vector<double> f2;
      for (std::size_t k : order) {
        s2.push_back(simplex[k]);
        f2.push_back(fv[k]);
      }
      simplex.swap(s2);
      fv.swap(f2);
    }
    double diameter = 0.0;
    for (std::size_t k = 1; k <= N; ++k)
      diameter = std::max(diameter, (simplex[k] - simplex[0]).lpNorm<Eigen::Infinity>());
    if (diameter < opts.tolerance) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    for (std::size_t k = 0; k < N; ++k) centroid += simplex[k];
    centroid /= static_cast<double>(N);

    const Eigen::VectorXd xr = centroid + (centroid - simplex[N]);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[N] = xe;
        fv[N] = fe;
      } else {
        simplex[N] = xr;
        fv[N] = fr;
      }
      continue;
    }
    if (fr < fv[N - 1]) {
      simplex[N] = xr;
      fv[N] = fr;
      continue;
    }
    // Contraction: outside when the reflection improved on the worst point.
    const bool outside = fr < fv[N];
    const Eigen::VectorXd xc =
        outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (simplex[N] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[N])) {
      simplex[N] = xc;
      fv[N] = fc;
      continue;
    }
    for (std::size_t k = 1; k <= N; ++k) {
      simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0]);
      fv[k] = eval(simplex[k]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x.resize(N);
  for (std::size_t n = 0; n < N; ++n) res.x[n] = simplex[best](static_cast<Eigen::Index>(n)) * scale[n];
  res.value = fv[best];
  return res;
}

MapResult map_estimate(const Misfit& misfit, std::size_t n_starts, std::uint64_t seed,
                       unsigned workers, const ParameterVector* first_start,
                       const NelderMeadOptions& opts) {
  if (n_starts == 0) throw ArgumentError("map_estimate: need at least one start");
  const ParameterSpace& space = misfit.space();
  const std::size_t N = space.dim();
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> starts(n_starts, std::vector<double>(N));
  for (auto& s : starts)
    for (std::size_t n = 0; n < N; ++n) s[n] = space.range(n).lo + unif(rng) * space.range(n).width();
  if (first_start) {
    if (first_start->size() != N) throw ArgumentError("map_estimate: start has wrong dimension");
    starts[0] = first_start->values;
  }

  // Optimize in box-normalized coordinates u = (y - lo) / |Gamma|.
  std::vector<double> unit(N, 1.0);
  auto objective = [&](std::span<const double> u) {
    std::vector<double> y(N);
    for (std::size_t n = 0; n < N; ++n) y[n] = space.range(n).lo + u[n] * space.range(n).width();
    return misfit.sum_squares(y);
  };

  std::vector<NelderMeadResult> runs(n_starts);
  std::vector<double> start_values(n_starts);
  parallel_for(n_starts, workers, [&](std::size_t r) {
    std::vector<double> u0(N);
    for (std::size_t n = 0; n < N; ++n)
      u0[n] = (starts[r][n] - space.range(n).lo) / space.range(n).width();
    start_values[r] = objective(u0);
    runs[r] = nelder_mead(objective, u0, unit, opts);
  });

  MapResult out;
  out.restarts = n_starts;
  std::size_t best = n_starts;
  for (std::size_t r = 0; r < n_starts; ++r) {
    if (runs[r].value < start_values[r]) ++out.improved;
    if (std::isfinite(runs[r].value) && (best == n_starts || runs[r].value < runs[best].value))
      best = r;
  }
  if (out.improved == 0 && !(best < n_starts && runs[best].value == 0.0))
    throw OptimizationError("map_estimate: no restart improved on its starting point");
  if (best == n_starts) throw OptimizationError("map_estimate: no finite objective value found");
  for (std::size_t n = 0; n < N; ++n)
    out.y.values.push_back(space.range(n).lo + runs[best].x[n] * space.range(n).width());
  out.objective = misfit.sum_squares(out.y.span());
  return out;
}

double noise_estimate(const Misfit& misfit, const ParameterVector& y_map) {
  const double ss = misfit.residuals(y_map.span()).squaredNorm();
  return std::sqrt(ss / static_cast<double>(misfit.n_observations()));
}

Eigen::MatrixXd model_jacobian(const Misfit& misfit, std::span<const double> y) {
  const ParameterSpace& space = misfit.space();
  const std::size_t N = space.dim();
  if (y.size() != N) throw ArgumentError("model_jacobian: dimension mismatch");
  Eigen::MatrixXd J(static_cast<Eigen::Index>(misfit.n_observations()), static_cast<Eigen::Index>(N));
  std::vector<double> yp(y.begin(), y.end()), ym(y.begin(), y.end());
  for (std::size_t n = 0; n < N; ++n) {
    const Interval r = space.range(n);
    const double d = 1e-4 * r.width();
    double hi = y[n] + d, lo = y[n] - d;
    if (hi > r.hi) hi = y[n];
    if (lo < r.lo) lo = y[n];
    yp[n] = hi;
    ym[n] = lo;
    J.col(static_cast<Eigen::Index>(n)) = (misfit.model(yp) - misfit.model(ym)) / (hi - lo);
    yp[n] = ym[n] = y[n];
  }
  return J;
}

GaussianPosterior gaussian_posterior(const Eigen::MatrixXd& J, const ParameterVector& y_map,
                                     double sigma) {
  const auto N = J.cols();
  if (static_cast<std::size_t>(N) != y_map.size())
    throw ArgumentError("gaussian_posterior: Jacobian and point dimensions differ");
  if (!(sigma >= 0.0)) throw ArgumentError("gaussian_posterior: negative sigma");
  // Column equilibration keeps the rank test independent of parameter units.
  Eigen::VectorXd scale = J.colwise().norm().transpose();
  for (Eigen::Index n = 0; n < N; ++n)
    if (scale(n) == 0.0) scale(n) = 1.0;
  const Eigen::MatrixXd Js = J * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Js, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  if (J.rows() < N || s(N - 1) <= 1e-12 * s(0)) {
    Eigen::VectorXd null = scale.cwiseInverse().asDiagonal() * svd.matrixV().col(N - 1);
    null.normalize();
    std::ostringstream ss;
    ss << "gaussian_posterior: J^T J is rank deficient; null direction (";
    for (Eigen::Index n = 0; n < N; ++n) ss << (n ? ", " : "") << format_double(null(n));
    ss << ")";
    throw IllPosedError(ss.str(), null);
  }
  const Eigen::MatrixXd V = svd.matrixV();
  const Eigen::MatrixXd inner = V * s.cwiseInverse().cwiseAbs2().asDiagonal() * V.transpose();
  GaussianPosterior gp;
  gp.mean = y_map;
  gp.jacobian = J;
  gp.sigma = sigma;
  gp.covariance = sigma * sigma * (scale.cwiseInverse().asDiagonal() * inner * scale.cwiseInverse().asDiagonal());
  gp.covariance = 0.5 * (gp.covariance + gp.covariance.transpose()).eval();
  return gp;
}

GaussianPosterior gaussian_posterior(const Misfit& misfit, const ParameterVector& y_map,
                                     double sigma) {
  return gaussian_posterior(model_jacobian(misfit, y_map.span()), y_map, sigma);
}

std::vector<double> GaussianPosterior::stddev() const {
  std::vector<double> s;
  for (Eigen::Index n = 0; n < covariance.rows(); ++n) s.push_back(std::sqrt(covariance(n, n)));
  return s;
}

std::string GaussianPosterior::text(const std::vector<std::string>& names) const {
  std::ostringstream ss;
  ss << "sigma_tilde = " << format_double(sigma) << '\n';
  ss << "mean";
  for (std::size_t n = 0; n < mean.size(); ++n) ss << ' ' << names[n] << '=' << format_double(mean[n]);
  ss << "\nstd";
  const auto sd = stddev();
  for (std::size_t n = 0; n < sd.size(); ++n) ss << ' ' << names[n] << '=' << format_double(sd[n]);
  ss << "\ncovariance\n";
  for (Eigen::Index r = 0; r < covariance.rows(); ++r) {
    for (Eigen::Index c = 0; c < covariance.cols(); ++c)
      ss << (c ? "," : "") << format_double(covariance(r, c));
    ss << '\n';
  }
  return ss.str();
}

GaussianSamples sample_gaussian(const GaussianPosterior& gp, std::size_t n, std::uint64_t seed,
                                const ParameterSpace& space) {
  if (n == 0) throw ArgumentError("sample_gaussian: n must be >= 1");
  const auto N = static_cast<Eigen::Index>(gp.mean.size());
  if (static_cast<std::size_t>(N) != space.dim())
    throw ArgumentError("sample_gaussian: posterior and space dimensions differ");
  Eigen::MatrixXd L;
  Eigen::LLT<Eigen::MatrixXd> llt(gp.covariance);
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
  } else {
    // Semi-definite fallback: symmetric square root with clamped eigenvalues.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gp.covariance);
    L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  const Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(gp.mean.values.data(), N);

  GaussianSamples out;
  out.samples.resize(static_cast<Eigen::Index>(n), N);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(N);
  std::vector<double> y(static_cast<std::size_t>(N));
  std::size_t accepted = 0;
  const std::size_t max_draws = 1000 * n + 1000;
  for (std::size_t draws = 0; accepted < n; ++draws) {
    if (draws >= max_draws)
      throw DomainError("sample_gaussian: posterior mass inside the box is too small to sample");
    for (Eigen::Index k = 0; k < N; ++k) z(k) = normal(rng);
    const Eigen::VectorXd x = mu + L * z;
    for (Eigen::Index k = 0; k < N; ++k) y[static_cast<std::size_t>(k)] = x(k);
    if (!space.contains(y)) {
      ++out.rejected;
      continue;
    }
    out.samples.row(static_cast<Eigen::Index>(accepted++)) = x.transpose();
  }
  out.high_rejection = out.rejected > n;
  return out;
}

Chain slice_sample(const LogDensity& logpost, const std::vector<double>& start,
                   const SliceOptions& opts, std::uint64_t seed) {
  const std::size_t N = start.size();
  if (N == 0) throw ArgumentError("slice_sample: empty start point");
  if (opts.widths.size() != N) throw ArgumentError("slice_sample: one width per coordinate required");
  for (double w : opts.widths)
    if (!(w > 0.0)) throw ArgumentError("slice_sample: widths must be positive");
  if (opts.thin == 0) throw ArgumentError("slice_sample: thin must be >= 1");
  std::vector<double> x = start;
  double lp = logpost(x);
  if (!std::isfinite(lp)) throw ArgumentError("slice_sample: log density at the start is not finite");

  Chain chain;
  chain.burnin = opts.burnin;
  chain.thin = opts.thin;
  chain.seed = seed;
  chain.raw_sweeps = opts.burnin + opts.n_retain * opts.thin;
  chain.samples.resize(static_cast<Eigen::Index>(opts.n_retain), static_cast<Eigen::Index>(N));

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::size_t evals = 0;
  auto f = [&](std::size_t n, double v) {
    const double keep = x[n];
    x[n] = v;
    const double r = logpost(x);
    x[n] = keep;
    ++evals;
    return r;
  };

  std::size_t kept = 0;
  for (std::size_t sweep = 1; sweep <= chain.raw_sweeps; ++sweep) {
    for (std::size_t n = 0; n < N; ++n) {
      const double level = lp - expo(rng);
      const double w = opts.widths[n];
      double lo = x[n] - w * unif(rng);
      double hi = lo + w;
      auto j = static_cast<std::size_t>(std::floor(static_cast<double>(opts.max_steps_out) * unif(rng)));
      std::size_t k = opts.max_steps_out > 0 ? opts.max_steps_out - 1 - j : 0;
      if (opts.max_steps_out == 0) j = 0;
      while (j > 0 && f(n, lo) > level) {
        lo -= w;
        --j;
      }
      while (k > 0 && f(n, hi) > level) {
        hi += w;
        --k;
      }
      for (int attempt = 0;; ++attempt) {
        const double cand = lo + unif(rng) * (hi - lo);
        const double lc = f(n, cand);
        if (lc > level) {
          x[n] = cand;
          lp = lc;
          break;
        }
        if (cand < x[n]) lo = cand;
        else hi = cand;
        if (attempt > 200) break;  // interval collapsed onto x; keep the current value
      }
    }
    if (sweep > opts.burnin && (sweep - opts.burnin) % opts.thin == 0)
      for (std::size_t n = 0; n < N; ++n)
        chain.samples(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(n)) = x[n];
    if (sweep > opts.burnin && (sweep - opts.burnin) % opts.thin == 0) ++kept;
  }
  chain.evaluations = evals;
  return chain;
}

Chain slice_sample(const Misfit& misfit, double sigma, const ParameterVector& start,
                   SliceOptions opts, std::uint64_t seed) {
  if (opts.widths.empty())
    for (const auto& r : misfit.space().ranges()) opts.widths.push_back(r.width() / 10.0);
  auto logpost = [&misfit, sigma](std::span<const double> y) {
    return -neg_log_posterior(misfit, y, sigma);
  };
  return slice_sample(logpost, start.values, opts, seed);
}

std::string Chain::csv(const std::vector<std::string>& names) const {
  std::ostringstream ss;
  for (std::size_t n = 0; n < names.size(); ++n) ss << (n ? "," : "") << names[n];
  ss << '\n';
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples.cols(); ++c) ss << (c ? "," : "") << format_double(samples(r, c));
    ss << '\n';
  }
  return ss.str();
}

Autocorrelation autocorrelation(const Eigen::MatrixXd& samples, std::size_t max_lag) {
  const auto n = samples.rows();
  if (static_cast<Eigen::Index>(max_lag) >= n)
    throw ArgumentError("autocorrelation: max_lag must be smaller than the chain length");
  Autocorrelation a;
  a.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(max_lag + 1), samples.cols());
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const Eigen::VectorXd x = samples.col(c).array() - samples.col(c).mean();
    const double c0 = x.squaredNorm() / static_cast<double>(n);
    const bool degenerate = !(c0 > 0.0);
    a.degenerate.push_back(degenerate);
    if (degenerate) continue;
    for (std::size_t l = 0; l <= max_lag; ++l) {
      const auto L = static_cast<Eigen::Index>(l);
      const double cl = x.head(n - L).dot(x.tail(n - L)) / static_cast<double>(n);
      a.values(L, c) = cl / c0;
    }
  }
  return a;
}

Correlation correlation_matrix(const Eigen::MatrixXd& samples) {
  const auto n = samples.rows();
  const auto N = samples.cols();
  if (n < 2) throw ArgumentError("correlation_matrix: need at least two samples");
  const Eigen::MatrixXd X = samples.rowwise() - samples.colwise().mean();
  const Eigen::MatrixXd C = X.transpose() * X;
  Correlation out;
  out.R = Eigen::MatrixXd::Identity(N, N);
  for (Eigen::Index k = 0; k < N; ++k) out.degenerate.push_back(!(C(k, k) > 0.0));
  for (Eigen::Index r = 0; r < N; ++r)
    for (Eigen::Index c = 0; c < N; ++c) {
      if (r == c) continue;
      if (out.degenerate[static_cast<std::size_t>(r)] || out.degenerate[static_cast<std::size_t>(c)])
        out.R(r, c) = std::numeric_limits<double>::quiet_NaN();
      else
        out.R(r, c) = std::clamp(C(r, c) / std::sqrt(C(r, r) * C(c, c)), -1.0, 1.0);
    }
  return out;
}

MarginalStats prior_stats(const ParameterSpace& space) {
  MarginalStats s;
  for (const auto& r : space.ranges()) {
    s.mean.push_back(r.midpoint());
    s.stddev.push_back(r.width() / std::sqrt(12.0));
  }
  return s;
}

MarginalStats sample_stats(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw ArgumentError("sample_stats: need at least two samples");
  MarginalStats s;
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const double m = samples.col(c).mean();
    const double v = (samples.col(c).array() - m).square().sum() / static_cast<double>(samples.rows() - 1);
    s.mean.push_back(m);
    s.stddev.push_back(std::sqrt(v));
  }
  return s;
}

Concentration concentration(const MarginalStats& prior, const MarginalStats& post) {
  if (prior.mean.size() != post.mean.size()) throw ArgumentError("concentration: size mismatch");
  Concentration c;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t n = 0; n < prior.mean.size(); ++n) {
    const bool undefined = prior.mean[n] == 0.0 || post.mean[n] == 0.0;
    c.cv_undefined.push_back(undefined);
    c.cv_prior.push_back(prior.mean[n] == 0.0 ? nan : prior.stddev[n] / std::abs(prior.mean[n]));
    c.cv_post.push_back(post.mean[n] == 0.0 ? nan : post.stddev[n] / std::abs(post.mean[n]));
    c.cf.push_back(prior.stddev[n] > 0.0 ? post.stddev[n] / prior.stddev[n] : nan);
    c.cf_inverse.push_back(post.stddev[n] > 0.0 ? prior.stddev[n] / post.stddev[n] : nan);
  }
  return c;
}

std::string concentration_csv(const std::vector<std::string>& names, const MarginalStats& prior,
                              const MarginalStats& post, const Concentration& c) {
  std::ostringstream ss;
  ss << "parameter,prior_mean,prior_std,post_mean,post_std,cv_prior,cv_post,cf,cf_inverse\n";
  for (std::size_t n = 0; n < names.size(); ++n)
    ss << names[n] << ',' << format_double(prior.mean[n]) << ',' << format_double(prior.stddev[n])
       << ',' << format_double(post.mean[n]) << ',' << format_double(post.stddev[n]) << ','
       << format_double(c.cv_prior[n]) << ',' << format_double(c.cv_post[n]) << ','
       << format_double(c.cf[n]) << ',' << format_double(c.cf_inverse[n]) << '\n';
  return ss.str();
}

} // namespace chemouq::bayes
