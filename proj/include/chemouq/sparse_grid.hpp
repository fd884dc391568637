#pragma once

#include "chemouq/model.hpp"
#include "chemouq/util.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chemouq::sg {

using MultiIndex = std::vector<int>;

// Clenshaw-Curtis abscissae x_j = cos(pi (j-1)/(m-1)) mapped to `interval`,
// ascending; the midpoint when m == 1. Throws ArgumentError for m == 0.
std::vector<double> knots_clenshaw_curtis(int m, Interval interval = {-1.0, 1.0});

// 1, 3, 5, 9, 17, ... Throws ArgumentError for i < 1.
int level_to_knots_doubling(int i);
// 1, 3, 5, 7, ... used for Leja sequences.
int level_to_knots_linear(int i);

// First m weighted Leja points for the Gaussian N(mean, std^2): x_1 at the
// mean, then greedy maximizers of exp(-x^2/4) prod |x - x_j| in standard
// coordinates. Prefix-nested in m.
std::vector<double> knots_weighted_leja(int m, double mean = 0.0, double std = 1.0);

class MultiIndexSet {
public:
  MultiIndexSet() = default;
  MultiIndexSet(int dim, std::vector<MultiIndex> indices);

  int dim() const { return dim_; }
  std::size_t size() const { return indices_.size(); }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  bool contains(const MultiIndex& i) const;
  bool is_downward_closed() const;

private:
  int dim_ = 0;
  std::vector<MultiIndex> indices_;  // sorted lexicographically
};

// {i in N_+^N : sum_n (i_n - 1) <= w}.
MultiIndexSet index_set_total_degree(int dim, int w);

// One-dimensional knot family: where the knots live and how many a level has.
class KnotFamily {
public:
  enum class Kind { clenshaw_curtis, weighted_leja };

  static KnotFamily clenshaw_curtis(Interval interval);
  static KnotFamily weighted_leja(double mean, double std);

  Kind kind() const { return kind_; }
  const Interval& interval() const { return interval_; }
  double mean() const { return mean_; }
  double stddev() const { return std_; }

  int knots_for_level(int level) const;
  // Knots in normalized coordinates ([-1,1] for CC, standard normal for Leja).
  std::vector<double> normalized_knots(int level) const;
  double to_normalized(double y) const;
  double from_normalized(double t) const;
  std::string describe() const;

private:
  Kind kind_ = Kind::clenshaw_curtis;
  Interval interval_{-1.0, 1.0};
  double mean_ = 0.0;
  double std_ = 1.0;
};

struct TensorGrid {
  MultiIndex index;
  int coefficient = 0;
  std::vector<int> counts;              // knots per dimension
  std::vector<std::size_t> node_ids;    // row-major, last dimension fastest
};

// Smolyak sparse grid built by the combination technique.
class SparseGrid {
public:
  SparseGrid(ParameterSpace space, int level, MultiIndexSet index_set,
             std::vector<KnotFamily> families);

  const ParameterSpace& space() const { return space_; }
  int level() const { return level_; }
  std::size_t dim() const { return space_.dim(); }
  const MultiIndexSet& index_set() const { return index_set_; }
  const std::vector<KnotFamily>& families() const { return families_; }
  const std::vector<TensorGrid>& tensors() const { return tensors_; }

  std::size_t n_nodes() const { return static_cast<std::size_t>(nodes_.rows()); }
  const Eigen::MatrixXd& nodes() const { return nodes_; }  // n_nodes x N, physical units
  ParameterVector node(std::size_t i) const;
  // Normalized coordinates of node i.
  std::vector<double> normalized_node(std::size_t i) const;

  // Combination weights: the interpolant at y is sum_i weights[i] * value_i.
  void node_weights(std::span<const double> y, std::span<double> weights) const;

  std::string nodes_csv() const;

private:
  struct LevelKnots {
    std::vector<double> knots;     // normalized
    std::vector<double> bary;      // barycentric weights
  };
  void basis_values(std::size_t dim, int level, double t, std::span<double> out) const;

  ParameterSpace space_;
  int level_;
  MultiIndexSet index_set_;
  std::vector<KnotFamily> families_;
  std::vector<std::vector<LevelKnots>> knots_;  // [dim][level - 1]
  std::vector<TensorGrid> tensors_;
  Eigen::MatrixXd nodes_;
  Eigen::MatrixXd normalized_;
};

// Total-degree Smolyak grid of level w. Families default to Clenshaw-Curtis
// with doubling on each parameter range. Throws ArgumentError when the family
// count differs from the space dimension.
SparseGrid build_grid(const ParameterSpace& space, int w,
                      std::optional<std::vector<KnotFamily>> families = std::nullopt);

struct SurrogateMetadata {
  std::string qoi;
  std::string solver_options;
  std::uint64_t seed = 0;
  std::vector<double> times;  // output abscissae (one per output)
};

class Surrogate {
public:
  Surrogate(SparseGrid grid, Eigen::MatrixXd node_values, SurrogateMetadata meta);

  const SparseGrid& grid() const { return grid_; }
  const ParameterSpace& space() const { return grid_.space(); }
  const Eigen::MatrixXd& node_values() const { return values_; }  // n_nodes x n_outputs
  const SurrogateMetadata& metadata() const { return meta_; }
  std::size_t n_outputs() const { return static_cast<std::size_t>(values_.cols()); }

  // Interpolated output vector at y. Points outside the box are evaluated
  // (polynomial extrapolation) and reported through `outside` when given.
  // Throws ArgumentError on a dimension mismatch.
  Eigen::VectorXd evaluate(std::span<const double> y, bool* outside = nullptr) const;
  Eigen::VectorXd evaluate(const ParameterVector& y, bool* outside = nullptr) const {
    return evaluate(y.span(), outside);
  }
  // Rows of `ys` are points; result rows are output vectors.
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& ys) const;

  // Surrogate of the selected outputs only (cheaper to evaluate).
  Surrogate restrict_outputs(const std::vector<std::size_t>& outputs) const;

  // Hash of the metadata, space signature, grid description and node values.
  std::uint64_t content_hash() const;

private:
  SparseGrid grid_;
  Eigen::MatrixXd values_;
  SurrogateMetadata meta_;
};

// Cache of evaluator results keyed by a 64-bit node key. Thread-safe.
class NodeCache {
public:
  virtual ~NodeCache() = default;
  virtual std::optional<std::vector<double>> get(std::uint64_t key) = 0;
  virtual void put(std::uint64_t key, const std::vector<double>& values) = 0;
};

class MemoryNodeCache : public NodeCache {
public:
  std::optional<std::vector<double>> get(std::uint64_t key) override;
  void put(std::uint64_t key, const std::vector<double>& values) override;
  std::size_t size();

private:
  std::mutex mutex_;
  std::map<std::uint64_t, std::vector<double>> entries_;
};

// One binary file per key under a directory.
class DirectoryNodeCache : public NodeCache {
public:
  explicit DirectoryNodeCache(std::string dir);
  std::optional<std::vector<double>> get(std::uint64_t key) override;
  void put(std::uint64_t key, const std::vector<double>& values) override;

private:
  std::string dir_;
  std::mutex mutex_;
};

class TrainingError : public Error {
public:
  using Error::Error;
};

using Evaluator = std::function<std::vector<double>(const ParameterVector&)>;

struct TrainOptions {
  unsigned workers = 1;
  NodeCache* cache = nullptr;
  std::uint64_t key_salt = 0;  // distinguishes evaluators sharing a cache
};

struct TrainStats {
  std::size_t evaluator_calls = 0;
  std::size_t cache_hits = 0;
};

std::uint64_t node_key(std::span<const double> y, std::uint64_t salt);

// Evaluates `evaluator` once per grid node (cache misses only) and assembles
// the surrogate. Throws TrainingError naming the node when the evaluator fails.
Surrogate train(const SparseGrid& grid, const Evaluator& evaluator, SurrogateMetadata meta,
                const TrainOptions& opts = {}, TrainStats* stats = nullptr);

class UnsupportedError : public Error {
public:
  using Error::Error;
};

// Expansion in orthonormal Legendre polynomials of the normalized box
// coordinates (uniform probability measure). Row k of `coefficients` holds the
// coefficient of `terms[k]` for every output; terms[0] is the zero index.
struct PceExpansion {
  int dim = 0;
  std::vector<MultiIndex> terms;  // polynomial degrees, 0-based
  Eigen::MatrixXd coefficients;   // n_terms x n_outputs

  std::size_t n_outputs() const { return static_cast<std::size_t>(coefficients.cols()); }
  double mean(std::size_t output) const { return coefficients(0, static_cast<Eigen::Index>(output)); }
  double variance(std::size_t output) const;
  // Evaluates the expansion at a physical point of the box.
  Eigen::VectorXd evaluate(const ParameterSpace& space, std::span<const double> y) const;
};

// Throws UnsupportedError for non-Clenshaw-Curtis (non-uniform) families.
PceExpansion to_pce(const Surrogate& surrogate);

// Orthonormal Legendre polynomial of degree k on [-1, 1] (uniform measure).
double legendre_orthonormal(int k, double t);
// Gauss-Legendre rule with n points on [-1, 1], weights summing to 2.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Versioned binary container: "CHSG" magic, format version, JSON header with
// space, grid, metadata and hash, then the node values.
void save(const Surrogate& surrogate, const std::string& path);
// Throws IncompatibleError on hash mismatch, corrupt header, or when
// `expected_space` is given and its signature differs.
Surrogate load(const std::string& path, const ParameterSpace* expected_space = nullptr);

} // namespace chemouq::sg
