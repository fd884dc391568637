#include "chemouq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace chemouq::sensitivity {

std::vector<std::size_t> default_time_indices(std::size_t n_t, std::size_t count) {
  if (n_t == 0 || count == 0) throw ArgumentError("default_time_indices: empty time grid");
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k <= count; ++k) {
    const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(k * n_t) / count));
    if (idx >= 1 && (out.empty() || out.back() != idx)) out.push_back(idx);
  }
  return out;
}

namespace {

std::vector<double> times_of(const sg::Surrogate& s, const std::vector<std::size_t>& idx) {
  std::vector<double> t;
  for (std::size_t i : idx) {
    if (i >= s.n_outputs()) throw ArgumentError("time index out of range");
    t.push_back(s.metadata().times.empty() ? static_cast<double>(i) : s.metadata().times[i]);
  }
  return t;
}

Response as_response(const sg::Surrogate& s) {
  return [&s](std::span<const double> y) { return s.evaluate(y); };
}

} // namespace

ResponseCurves response_curves(const Response& f, const ParameterSpace& space,
                               std::size_t n_points, std::vector<double> times) {
  if (n_points < 2) throw ArgumentError("response_curves: need at least 2 points");
  ResponseCurves rc;
  rc.names = space.names();
  rc.times = std::move(times);
  rc.pinned = space.midpoint().values;
  for (std::size_t n = 0; n < space.dim(); ++n) {
    const Interval r = space.range(n);
    std::vector<double> pts(n_points);
    for (std::size_t k = 0; k < n_points; ++k)
      pts[k] = k + 1 == n_points ? r.hi : r.lo + r.width() * static_cast<double>(k) / (n_points - 1);
    Eigen::MatrixXd v(static_cast<Eigen::Index>(n_points), static_cast<Eigen::Index>(rc.times.size()));
    std::vector<double> y = rc.pinned;
    for (std::size_t k = 0; k < n_points; ++k) {
      y[n] = pts[k];
      const Eigen::VectorXd out = f(y);
      if (static_cast<std::size_t>(out.size()) != rc.times.size())
        throw ArgumentError("response_curves: response size differs from time count");
      v.row(static_cast<Eigen::Index>(k)) = out.transpose();
    }
    rc.sweep.push_back(std::move(pts));
    rc.values.push_back(std::move(v));
  }
  return rc;
}

ResponseCurves response_curves(const sg::Surrogate& surrogate, std::size_t n_points,
                               const std::vector<std::size_t>& time_indices) {
  const auto r = surrogate.restrict_outputs(time_indices);
  return response_curves(as_response(r), surrogate.space(), n_points,
                         times_of(surrogate, time_indices));
}

std::string ResponseCurves::csv() const {
  std::ostringstream ss;
  ss << "parameter,value,t,qoi\n";
  for (std::size_t n = 0; n < names.size(); ++n)
    for (std::size_t k = 0; k < sweep[n].size(); ++k)
      for (std::size_t t = 0; t < times.size(); ++t)
        ss << names[n] << ',' << format_double(sweep[n][k]) << ',' << format_double(times[t]) << ','
           << format_double(values[n](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)))
           << '\n';
  return ss.str();
}

SobolAtTime sobol_from_pce(const sg::PceExpansion& pce, std::size_t output) {
  if (output >= pce.n_outputs()) throw ArgumentError("sobol: output index out of range");
  const auto N = static_cast<std::size_t>(pce.dim);
  const auto o = static_cast<Eigen::Index>(output);
  SobolAtTime s;
  s.variance = pce.variance(output);
  const double scale = std::max(std::abs(pce.mean(output)), 1.0);
  if (!(s.variance > 1e-24 * scale * scale))
    throw UndefinedIndicesError("sobol: total variance vanishes");
  s.main.assign(N, 0.0);
  s.total.assign(N, 0.0);
  for (std::size_t k = 0; k < pce.terms.size(); ++k) {
    const auto& alpha = pce.terms[k];
    const double c2 = std::pow(pce.coefficients(static_cast<Eigen::Index>(k), o), 2);
    std::size_t active = 0, last = 0;
    for (std::size_t n = 0; n < N; ++n)
      if (alpha[n] != 0) {
        ++active;
        last = n;
        s.total[n] += c2;
      }
    if (active == 1) s.main[last] += c2;
  }
  for (std::size_t n = 0; n < N; ++n) {
    s.main[n] /= s.variance;
    s.total[n] /= s.variance;
  }
  s.defined = true;
  return s;
}

SobolIndices sobol_indices(const sg::PceExpansion& pce, const std::vector<std::string>& names,
                           const std::vector<double>& times) {
  if (names.size() != static_cast<std::size_t>(pce.dim))
    throw ArgumentError("sobol: name count differs from PCE dimension");
  if (times.size() != pce.n_outputs()) throw ArgumentError("sobol: time count differs from outputs");
  SobolIndices out;
  out.names = names;
  for (std::size_t k = 0; k < pce.n_outputs(); ++k) {
    SobolAtTime s;
    try {
      s = sobol_from_pce(pce, k);
    } catch (const UndefinedIndicesError&) {
      s.defined = false;
    }
    s.t = times[k];
    out.per_time.push_back(std::move(s));
  }
  return out;
}

SobolIndices sobol_indices(const sg::Surrogate& surrogate,
                           const std::vector<std::size_t>& time_indices) {
  const auto pce = sg::to_pce(surrogate.restrict_outputs(time_indices));
  return sobol_indices(pce, surrogate.space().names(), times_of(surrogate, time_indices));
}

MorrisIndices morris_indices(const Response& f, const ParameterSpace& space, std::size_t P,
                             std::uint64_t seed, const std::vector<double>& times) {
  if (P == 0) throw ArgumentError("morris: need at least one trajectory");
  const std::size_t N = space.dim();
  const std::size_t T = times.size();
  MorrisIndices out;
  out.names = space.names();
  out.n_trajectories = P;
  out.seed = seed;
  for (std::size_t n = 0; n < N; ++n) out.increments.push_back(space.range(n).width() / P);

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(T));
  std::vector<double> y(N);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t n = 0; n < N; ++n)
      y[n] = space.range(n).lo + unif(rng) * space.range(n).width();
    Eigen::VectorXd prev = f(y);
    if (static_cast<std::size_t>(prev.size()) != T)
      throw ArgumentError("morris: response size differs from time count");
    for (std::size_t n = 0; n < N; ++n) {
      double h = out.increments[n];
      if (y[n] + h > space.range(n).hi) h = -h;
      y[n] += h;
      Eigen::VectorXd next = f(y);
      sum.row(static_cast<Eigen::Index>(n)) += ((next - prev) / h).cwiseAbs().transpose();
      prev = std::move(next);
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    MorrisAtTime m;
    m.t = times[t];
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      m.m.push_back(sum(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t)) / P);
      total += m.m.back();
    }
    if (total > 0.0) {
      for (double v : m.m) m.m_bar.push_back(v / total);
    } else {
      m.uniform_fallback = true;
      m.m_bar.assign(N, 1.0 / N);
    }
    out.per_time.push_back(std::move(m));
  }
  return out;
}

MorrisIndices morris_indices(const sg::Surrogate& surrogate, std::size_t P, std::uint64_t seed,
                             const std::vector<std::size_t>& time_indices) {
  const auto r = surrogate.restrict_outputs(time_indices);
  return morris_indices(as_response(r), surrogate.space(), P, seed,
                        times_of(surrogate, time_indices));
}

Relevance classify_relevance(const SobolIndices& sobol, const MorrisIndices& morris,
                             double threshold) {
  if (sobol.names != morris.names) throw ArgumentError("classify_relevance: parameter lists differ");
  if (sobol.per_time.size() != morris.per_time.size())
    throw ArgumentError("classify_relevance: indices on different time sets");
  const std::size_t N = sobol.names.size();
  Relevance r;
  r.score.assign(N, 0.0);
  for (std::size_t t = 0; t < sobol.per_time.size(); ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      if (sobol.per_time[t].defined) r.score[n] = std::max(r.score[n], sobol.per_time[t].total[n]);
      if (!morris.per_time[t].uniform_fallback)
        r.score[n] = std::max(r.score[n], morris.per_time[t].m_bar[n]);
    }
  }
  for (std::size_t n = 0; n < N; ++n)
    (r.score[n] < threshold ? r.negligible : r.relevant).push_back(sobol.names[n]);
  return r;
}

std::string indices_csv(const SobolIndices& sobol, const MorrisIndices& morris) {
  std::ostringstream ss;
  ss << "t,parameter,S,S_T,m,m_bar\n";
  for (std::size_t t = 0; t < sobol.per_time.size(); ++t) {
    const auto& s = sobol.per_time[t];
    const auto& m = morris.per_time[t];
    for (std::size_t n = 0; n < sobol.names.size(); ++n) {
      ss << format_double(s.t) << ',' << sobol.names[n] << ',';
      if (s.defined) ss << format_double(s.main[n]) << ',' << format_double(s.total[n]);
      else ss << ',';
      ss << ',' << format_double(m.m[n]) << ',' << format_double(m.m_bar[n]) << '\n';
    }
  }
  return ss.str();
}

} // namespace chemouq::sensitivity
