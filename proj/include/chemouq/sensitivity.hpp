#pragma once

#include "chemouq/model.hpp"
#include "chemouq/sparse_grid.hpp"
#include "chemouq/util.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace chemouq::sensitivity {

// Vector-valued response y -> outputs, one output per reported time.
using Response = std::function<Eigen::VectorXd(std::span<const double>)>;

class UndefinedIndicesError : public Error {
public:
  using Error::Error;
};

// `count` equispaced indices in (0, n_t], i.e. round(k n_t / count), k = 1..count.
std::vector<std::size_t> default_time_indices(std::size_t n_t, std::size_t count = 10);

struct ResponseCurves {
  std::vector<std::string> names;
  std::vector<double> times;
  std::vector<double> pinned;                 // range midpoints
  std::vector<std::vector<double>> sweep;     // [param][point]
  std::vector<Eigen::MatrixXd> values;        // [param]: points x times

  std::string csv() const;  // parameter,value,t,qoi
};

// One-at-a-time sweeps with the other parameters at their midpoints.
// Throws ArgumentError when n_points < 2.
ResponseCurves response_curves(const Response& f, const ParameterSpace& space,
                               std::size_t n_points, std::vector<double> times);
ResponseCurves response_curves(const sg::Surrogate& surrogate, std::size_t n_points,
                               const std::vector<std::size_t>& time_indices);

struct SobolAtTime {
  double t = 0.0;
  bool defined = false;  // false when the variance vanishes
  double variance = 0.0;
  std::vector<double> main;
  std::vector<double> total;
};

struct SobolIndices {
  std::vector<std::string> names;
  std::vector<SobolAtTime> per_time;
};

// Main and total indices of one PCE output. Throws UndefinedIndicesError
// when the total variance is zero (relative to the mean).
SobolAtTime sobol_from_pce(const sg::PceExpansion& pce, std::size_t output);
// Indices at every output of the PCE; zero-variance outputs are reported as
// undefined rather than thrown.
SobolIndices sobol_indices(const sg::PceExpansion& pce, const std::vector<std::string>& names,
                           const std::vector<double>& times);
SobolIndices sobol_indices(const sg::Surrogate& surrogate,
                           const std::vector<std::size_t>& time_indices);

struct MorrisAtTime {
  double t = 0.0;
  std::vector<double> m;
  std::vector<double> m_bar;
  bool uniform_fallback = false;  // all m_n = 0; m_bar set to 1/N
};

struct MorrisIndices {
  std::vector<std::string> names;
  std::size_t n_trajectories = 0;
  std::vector<double> increments;  // h_n
  std::uint64_t seed = 0;
  std::vector<MorrisAtTime> per_time;
};

// P trajectories from uniform base points, each stepping every coordinate
// once in order by h_n = |Gamma_n| / P. A step that would leave the box is
// taken in the negative direction. Throws ArgumentError when P == 0.
MorrisIndices morris_indices(const Response& f, const ParameterSpace& space, std::size_t P,
                             std::uint64_t seed, const std::vector<double>& times);
MorrisIndices morris_indices(const sg::Surrogate& surrogate, std::size_t P, std::uint64_t seed,
                             const std::vector<std::size_t>& time_indices);

struct Relevance {
  std::vector<std::string> relevant;
  std::vector<std::string> negligible;
  std::vector<double> score;  // max over times of max(S_T, m_bar), per parameter
};

// A parameter is negligible iff its score is below `threshold`.
Relevance classify_relevance(const SobolIndices& sobol, const MorrisIndices& morris,
                             double threshold = 0.05);

// t,parameter,S,S_T,m,m_bar (empty S columns where Sobol is undefined).
std::string indices_csv(const SobolIndices& sobol, const MorrisIndices& morris);

} // namespace chemouq::sensitivity
