#include "chemouq/sparse_grid.hpp"

#include "chemouq/json_io.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace chemouq::sg {

using nlohmann::json;

std::vector<double> knots_clenshaw_curtis(int m, Interval interval) {
  if (m < 1) throw ArgumentError("knots_clenshaw_curtis: m must be >= 1");
  if (m == 1) return {interval.midpoint()};
  std::vector<double> x(static_cast<std::size_t>(m));
  // sin form of cos(pi (j-1)/(m-1)), reversed: exactly symmetric about 0.
  for (int j = 0; j < m; ++j) {
    const double t = std::sin(std::numbers::pi * (2.0 * j - (m - 1)) / (2.0 * (m - 1)));
    x[static_cast<std::size_t>(j)] = t;
  }
  x.front() = -1.0;
  x.back() = 1.0;
  if ((m - 1) % 2 == 0) x[static_cast<std::size_t>((m - 1) / 2)] = 0.0;
  for (auto& v : x) {
    if (v == -1.0) v = interval.lo;
    else if (v == 1.0) v = interval.hi;
    else v = interval.lo + 0.5 * (v + 1.0) * interval.width();
  }
  return x;
}

int level_to_knots_doubling(int i) {
  if (i < 1) throw ArgumentError("level_to_knots_doubling: level must be >= 1");
  if (i == 1) return 1;
  if (i > 30) throw ArgumentError("level_to_knots_doubling: level too large");
  return (1 << (i - 1)) + 1;
}

int level_to_knots_linear(int i) {
  if (i < 1) throw ArgumentError("level_to_knots_linear: level must be >= 1");
  return 2 * i - 1;
}

namespace {

double leja_log_objective(double x, const std::vector<double>& pts) {
  double v = -0.25 * x * x;
  for (double p : pts) v += std::log(std::abs(x - p));
  return v;
}

// Standard-normal Leja sequence, grown on demand and shared across callers.
std::vector<double> standard_leja(int m) {
  static std::mutex mutex;
  static std::vector<double> seq{0.0};
  std::lock_guard<std::mutex> lock(mutex);
  constexpr double kLo = -10.0, kStep = 1e-3;
  constexpr int kCandidates = 20001;
  while (static_cast<int>(seq.size()) < m) {
    double best = -std::numeric_limits<double>::infinity();
    double arg = 0.0;
    for (int c = 0; c < kCandidates; ++c) {
      const double x = kLo + c * kStep;
      const double v = leja_log_objective(x, seq);
      // Ties (up to rounding) go to the smaller abscissa.
      if (v > best + 1e-12) {
        best = v;
        arg = x;
      }
    }
    // Golden-section refinement within one candidate spacing.
    double a = arg - kStep, b = arg + kStep;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c1 = b - g * (b - a), c2 = a + g * (b - a);
    double f1 = leja_log_objective(c1, seq), f2 = leja_log_objective(c2, seq);
    for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
      if (f1 >= f2) {
        b = c2; c2 = c1; f2 = f1;
        c1 = b - g * (b - a);
        f1 = leja_log_objective(c1, seq);
      } else {
        a = c1; c1 = c2; f1 = f2;
        c2 = a + g * (b - a);
        f2 = leja_log_objective(c2, seq);
      }
    }
    const double refined = 0.5 * (a + b);
    seq.push_back(leja_log_objective(refined, seq) >= best ? refined : arg);
  }
  return {seq.begin(), seq.begin() + m};
}

} // namespace

std::vector<double> knots_weighted_leja(int m, double mean, double std) {
  if (m < 1) throw ArgumentError("knots_weighted_leja: m must be >= 1");
  if (!(std > 0.0)) throw ArgumentError("knots_weighted_leja: std must be positive");
  auto x = standard_leja(m);
  for (auto& v : x) v = mean + std * v;
  return x;
}

MultiIndexSet::MultiIndexSet(int dim, std::vector<MultiIndex> indices)
    : dim_(dim), indices_(std::move(indices)) {
  if (dim_ < 1) throw ArgumentError("multi-index set: dimension must be >= 1");
  for (const auto& i : indices_) {
    if (static_cast<int>(i.size()) != dim_)
      throw ArgumentError("multi-index set: index of wrong dimension");
    for (int v : i)
      if (v < 1) throw ArgumentError("multi-index set: entries must be >= 1");
  }
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

bool MultiIndexSet::contains(const MultiIndex& i) const {
  return std::binary_search(indices_.begin(), indices_.end(), i);
}

bool MultiIndexSet::is_downward_closed() const {
  for (const auto& i : indices_) {
    for (int n = 0; n < dim_; ++n) {
      if (i[static_cast<std::size_t>(n)] == 1) continue;
      MultiIndex j = i;
      --j[static_cast<std::size_t>(n)];
      if (!contains(j)) return false;
    }
  }
  return true;
}

MultiIndexSet index_set_total_degree(int dim, int w) {
  if (dim < 1) throw ArgumentError("index_set_total_degree: N must be >= 1");
  if (w < 0) throw ArgumentError("index_set_total_degree: w must be >= 0");
  std::vector<MultiIndex> out;
  MultiIndex cur(static_cast<std::size_t>(dim), 1);
  // Odometer over {1..w+1}^N, pruned by the degree budget.
  std::function<void(int, int)> rec = [&](int n, int budget) {
    if (n == dim) {
      out.push_back(cur);
      return;
    }
    for (int k = 0; k <= budget; ++k) {
      cur[static_cast<std::size_t>(n)] = k + 1;
      rec(n + 1, budget - k);
    }
    cur[static_cast<std::size_t>(n)] = 1;
  };
  rec(0, w);
  return MultiIndexSet(dim, std::move(out));
}

KnotFamily KnotFamily::clenshaw_curtis(Interval interval) {
  if (!(interval.lo < interval.hi)) throw ArgumentError("knot family: empty interval");
  KnotFamily f;
  f.kind_ = Kind::clenshaw_curtis;
  f.interval_ = interval;
  return f;
}

KnotFamily KnotFamily::weighted_leja(double mean, double std) {
  if (!(std > 0.0)) throw ArgumentError("knot family: std must be positive");
  KnotFamily f;
  f.kind_ = Kind::weighted_leja;
  f.mean_ = mean;
  f.std_ = std;
  return f;
}

int KnotFamily::knots_for_level(int level) const {
  return kind_ == Kind::clenshaw_curtis ? level_to_knots_doubling(level)
                                        : level_to_knots_linear(level);
}

std::vector<double> KnotFamily::normalized_knots(int level) const {
  const int m = knots_for_level(level);
  return kind_ == Kind::clenshaw_curtis ? knots_clenshaw_curtis(m) : standard_leja(m);
}

double KnotFamily::to_normalized(double y) const {
  if (kind_ == Kind::clenshaw_curtis) return 2.0 * (y - interval_.lo) / interval_.width() - 1.0;
  return (y - mean_) / std_;
}

double KnotFamily::from_normalized(double t) const {
  if (kind_ == Kind::clenshaw_curtis) {
    if (t == -1.0) return interval_.lo;
    if (t == 1.0) return interval_.hi;
    return std::clamp(interval_.lo + 0.5 * (t + 1.0) * interval_.width(), interval_.lo,
                      interval_.hi);
  }
  return mean_ + std_ * t;
}

std::string KnotFamily::describe() const {
  if (kind_ == Kind::clenshaw_curtis)
    return "clenshaw_curtis[" + format_double(interval_.lo) + "," + format_double(interval_.hi) +
           "]";
  return "weighted_leja(" + format_double(mean_) + "," + format_double(std_) + ")";
}

SparseGrid::SparseGrid(ParameterSpace space, int level, MultiIndexSet index_set,
                       std::vector<KnotFamily> families)
    : space_(std::move(space)), level_(level), index_set_(std::move(index_set)),
      families_(std::move(families)) {
  const std::size_t N = space_.dim();
  if (families_.size() != N)
    throw ArgumentError("sparse grid: " + std::to_string(families_.size()) +
                        " knot families for a " + std::to_string(N) + "-dimensional space");
  if (static_cast<std::size_t>(index_set_.dim()) != N)
    throw ArgumentError("sparse grid: index set dimension differs from space dimension");
  if (index_set_.size() == 0) throw ArgumentError("sparse grid: empty index set");
  if (!index_set_.is_downward_closed())
    throw ArgumentError("sparse grid: index set is not downward closed");

  std::vector<int> max_level(N, 1);
  for (const auto& i : index_set_.indices())
    for (std::size_t n = 0; n < N; ++n) max_level[n] = std::max(max_level[n], i[n]);

  knots_.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    for (int l = 1; l <= max_level[n]; ++l) {
      LevelKnots lk;
      lk.knots = families_[n].normalized_knots(l);
      const std::size_t m = lk.knots.size();
      lk.bary.assign(m, 1.0);
      for (std::size_t j = 0; j < m; ++j) {
        double prod = 1.0;
        for (std::size_t k = 0; k < m; ++k)
          if (k != j) prod *= lk.knots[j] - lk.knots[k];
        lk.bary[j] = 1.0 / prod;
      }
      knots_[n].push_back(std::move(lk));
    }
  }

  // Combination coefficients c_i = sum over j in {0,1}^N with i+j in I of (-1)^|j|.
  std::map<std::vector<long long>, std::size_t> node_index;
  std::vector<std::vector<double>> normalized_nodes;
  for (const auto& i : index_set_.indices()) {
    int c = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << N); ++mask) {
      MultiIndex k = i;
      int bits = 0;
      for (std::size_t n = 0; n < N; ++n)
        if (mask & (std::size_t{1} << n)) {
          ++k[n];
          ++bits;
        }
      if (index_set_.contains(k)) c += (bits % 2 == 0) ? 1 : -1;
    }
    if (c == 0) continue;

    TensorGrid tg;
    tg.index = i;
    tg.coefficient = c;
    std::size_t total = 1;
    for (std::size_t n = 0; n < N; ++n) {
      tg.counts.push_back(static_cast<int>(knots_[n][static_cast<std::size_t>(i[n] - 1)].knots.size()));
      total *= static_cast<std::size_t>(tg.counts.back());
    }
    tg.node_ids.resize(total);
    std::vector<int> pos(N, 0);
    std::vector<double> t(N);
    std::vector<long long> key(N);
    for (std::size_t r = 0; r < total; ++r) {
      for (std::size_t n = 0; n < N; ++n) {
        t[n] = knots_[n][static_cast<std::size_t>(i[n] - 1)].knots[static_cast<std::size_t>(pos[n])];
        key[n] = std::llround(t[n] * 1e12);
      }
      auto [it, inserted] = node_index.emplace(key, normalized_nodes.size());
      if (inserted) normalized_nodes.push_back(t);
      tg.node_ids[r] = it->second;
      for (std::size_t n = N; n-- > 0;) {
        if (++pos[n] < tg.counts[n]) break;
        pos[n] = 0;
      }
    }
    tensors_.push_back(std::move(tg));
  }

  const auto n_nodes = static_cast<Eigen::Index>(normalized_nodes.size());
  nodes_.resize(n_nodes, static_cast<Eigen::Index>(N));
  normalized_.resize(n_nodes, static_cast<Eigen::Index>(N));
  for (Eigen::Index r = 0; r < n_nodes; ++r)
    for (std::size_t n = 0; n < N; ++n) {
      const double t = normalized_nodes[static_cast<std::size_t>(r)][n];
      normalized_(r, static_cast<Eigen::Index>(n)) = t;
      nodes_(r, static_cast<Eigen::Index>(n)) = families_[n].from_normalized(t);
    }
}

ParameterVector SparseGrid::node(std::size_t i) const {
  ParameterVector y;
  for (Eigen::Index n = 0; n < nodes_.cols(); ++n)
    y.values.push_back(nodes_(static_cast<Eigen::Index>(i), n));
  return y;
}

std::vector<double> SparseGrid::normalized_node(std::size_t i) const {
  std::vector<double> t;
  for (Eigen::Index n = 0; n < normalized_.cols(); ++n)
    t.push_back(normalized_(static_cast<Eigen::Index>(i), n));
  return t;
}

void SparseGrid::basis_values(std::size_t dim, int level, double t, std::span<double> out) const {
  const auto& lk = knots_[dim][static_cast<std::size_t>(level - 1)];
  const std::size_t m = lk.knots.size();
  for (std::size_t j = 0; j < m; ++j) {
    if (t == lk.knots[j]) {
      std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m), 0.0);
      out[j] = 1.0;
      return;
    }
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    out[j] = lk.bary[j] / (t - lk.knots[j]);
    denom += out[j];
  }
  for (std::size_t j = 0; j < m; ++j) out[j] /= denom;
}

void SparseGrid::node_weights(std::span<const double> y, std::span<double> weights) const {
  const std::size_t N = dim();
  if (y.size() != N)
    throw ArgumentError("surrogate evaluation: point has " + std::to_string(y.size()) +
                        " entries, grid has " + std::to_string(N));
  if (weights.size() != n_nodes()) throw ArgumentError("node_weights: wrong output size");
  std::fill(weights.begin(), weights.end(), 0.0);

  // Basis values for every dimension and level, computed once per point.
  thread_local std::vector<std::vector<std::vector<double>>> basis;
  basis.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double t = families_[n].to_normalized(y[n]);
    basis[n].resize(knots_[n].size());
    for (std::size_t l = 0; l < knots_[n].size(); ++l) {
      basis[n][l].resize(knots_[n][l].knots.size());
      basis_values(n, static_cast<int>(l + 1), t, basis[n][l]);
    }
  }

  thread_local std::vector<double> prod, next;
  for (const auto& tg : tensors_) {
    prod.assign(1, static_cast<double>(tg.coefficient));
    for (std::size_t n = 0; n < N; ++n) {
      const auto& b = basis[n][static_cast<std::size_t>(tg.index[n] - 1)];
      next.resize(prod.size() * b.size());
      std::size_t r = 0;
      for (double p : prod)
        for (double v : b) next[r++] = p * v;
      prod.swap(next);
    }
    for (std::size_t r = 0; r < prod.size(); ++r) weights[tg.node_ids[r]] += prod[r];
  }
}

std::string SparseGrid::nodes_csv() const {
  std::ostringstream ss;
  ss << "node";
  for (const auto& name : space_.names()) ss << ',' << name;
  ss << '\n';
  for (Eigen::Index r = 0; r < nodes_.rows(); ++r) {
    ss << r;
    for (Eigen::Index n = 0; n < nodes_.cols(); ++n) ss << ',' << format_double(nodes_(r, n));
    ss << '\n';
  }
  return ss.str();
}

SparseGrid build_grid(const ParameterSpace& space, int w,
                      std::optional<std::vector<KnotFamily>> families) {
  if (w < 0) throw ArgumentError("build_grid: level must be >= 0");
  std::vector<KnotFamily> fams;
  if (families) {
    fams = std::move(*families);
  } else {
    for (const auto& r : space.ranges()) fams.push_back(KnotFamily::clenshaw_curtis(r));
  }
  if (fams.size() != space.dim())
    throw ArgumentError("build_grid: " + std::to_string(fams.size()) + " knot families for a " +
                        std::to_string(space.dim()) + "-dimensional space");
  return SparseGrid(space, w, index_set_total_degree(static_cast<int>(space.dim()), w),
                    std::move(fams));
}

Surrogate::Surrogate(SparseGrid grid, Eigen::MatrixXd node_values, SurrogateMetadata meta)
    : grid_(std::move(grid)), values_(std::move(node_values)), meta_(std::move(meta)) {
  if (static_cast<std::size_t>(values_.rows()) != grid_.n_nodes())
    throw ArgumentError("surrogate: " + std::to_string(values_.rows()) + " node values for " +
                        std::to_string(grid_.n_nodes()) + " nodes");
  if (!meta_.times.empty() && meta_.times.size() != static_cast<std::size_t>(values_.cols()))
    throw ArgumentError("surrogate: output times do not match the output count");
}

Eigen::VectorXd Surrogate::evaluate(std::span<const double> y, bool* outside) const {
  if (y.size() != grid_.dim())
    throw ArgumentError("surrogate evaluation: point has " + std::to_string(y.size()) +
                        " entries, surrogate has " + std::to_string(grid_.dim()));
  if (outside) *outside = !grid_.space().contains(y);
  thread_local Eigen::VectorXd w;
  w.resize(static_cast<Eigen::Index>(grid_.n_nodes()));
  grid_.node_weights(y, std::span<double>(w.data(), static_cast<std::size_t>(w.size())));
  return values_.transpose() * w;
}

Eigen::MatrixXd Surrogate::evaluate_batch(const Eigen::MatrixXd& ys) const {
  if (static_cast<std::size_t>(ys.cols()) != grid_.dim())
    throw ArgumentError("surrogate evaluation: batch has " + std::to_string(ys.cols()) +
                        " columns, surrogate has " + std::to_string(grid_.dim()));
  Eigen::MatrixXd W(ys.rows(), static_cast<Eigen::Index>(grid_.n_nodes()));
  std::vector<double> y(grid_.dim()), w(grid_.n_nodes());
  for (Eigen::Index r = 0; r < ys.rows(); ++r) {
    for (std::size_t n = 0; n < y.size(); ++n) y[n] = ys(r, static_cast<Eigen::Index>(n));
    grid_.node_weights(y, w);
    for (std::size_t k = 0; k < w.size(); ++k) W(r, static_cast<Eigen::Index>(k)) = w[k];
  }
  return W * values_;
}

Surrogate Surrogate::restrict_outputs(const std::vector<std::size_t>& outputs) const {
  Eigen::MatrixXd v(values_.rows(), static_cast<Eigen::Index>(outputs.size()));
  SurrogateMetadata meta = meta_;
  meta.times.clear();
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    if (outputs[k] >= n_outputs()) throw ArgumentError("restrict_outputs: index out of range");
    v.col(static_cast<Eigen::Index>(k)) = values_.col(static_cast<Eigen::Index>(outputs[k]));
    if (!meta_.times.empty()) meta.times.push_back(meta_.times[outputs[k]]);
  }
  return Surrogate(grid_, std::move(v), std::move(meta));
}

namespace {

json family_to_json(const KnotFamily& f) {
  if (f.kind() == KnotFamily::Kind::clenshaw_curtis)
    return {{"kind", "clenshaw_curtis"}, {"lo", f.interval().lo}, {"hi", f.interval().hi}};
  return {{"kind", "weighted_leja"}, {"mean", f.mean()}, {"std", f.stddev()}};
}

KnotFamily family_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "clenshaw_curtis")
    return KnotFamily::clenshaw_curtis({j.at("lo").get<double>(), j.at("hi").get<double>()});
  if (kind == "weighted_leja")
    return KnotFamily::weighted_leja(j.at("mean").get<double>(), j.at("std").get<double>());
  throw IncompatibleError("unknown knot family '" + kind + "'");
}

json header_json(const Surrogate& s) {
  const auto& g = s.grid();
  json fams = json::array();
  for (const auto& f : g.families()) fams.push_back(family_to_json(f));
  json meta = {{"qoi", s.metadata().qoi},
               {"solver_options", s.metadata().solver_options},
               {"seed", s.metadata().seed},
               {"times", s.metadata().times}};
  return {{"space", space_to_json(g.space())},
          {"signature", g.space().signature()},
          {"level", g.level()},
          {"index_set", g.index_set().indices()},
          {"families", fams},
          {"n_nodes", g.n_nodes()},
          {"n_outputs", s.n_outputs()},
          {"metadata", meta}};
}

std::uint64_t payload_hash(const std::string& header, const Eigen::MatrixXd& values) {
  const std::uint64_t h = fnv1a(header);
  return fnv1a_doubles(values.data(), static_cast<std::size_t>(values.size()), h);
}

constexpr char kMagic[4] = {'C', 'H', 'S', 'G'};
constexpr std::uint32_t kFormatVersion = 1;

} // namespace

std::uint64_t Surrogate::content_hash() const {
  return payload_hash(header_json(*this).dump(), values_);
}

std::uint64_t node_key(std::span<const double> y, std::uint64_t salt) {
  return fnv1a_doubles(y.data(), y.size(), splitmix64(salt));
}

std::optional<std::vector<double>> MemoryNodeCache::get(std::uint64_t key) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void MemoryNodeCache::put(std::uint64_t key, const std::vector<double>& values) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_[key] = values;
}

std::size_t MemoryNodeCache::size() {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

DirectoryNodeCache::DirectoryNodeCache(std::string dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<std::vector<double>> DirectoryNodeCache::get(std::uint64_t key) {
  std::lock_guard<std::mutex> lock(mutex_);
  std::ifstream in(dir_ + "/" + hex64(key) + ".bin", std::ios::binary);
  if (!in) return std::nullopt;
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1u << 26)) return std::nullopt;
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) return std::nullopt;
  return v;
}

void DirectoryNodeCache::put(std::uint64_t key, const std::vector<double>& values) {
  std::lock_guard<std::mutex> lock(mutex_);
  const std::string path = dir_ + "/" + hex64(key) + ".bin";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    const std::uint64_t n = values.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    if (!out) throw Error("node cache: cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Surrogate train(const SparseGrid& grid, const Evaluator& evaluator, SurrogateMetadata meta,
                const TrainOptions& opts, TrainStats* stats) {
  const std::size_t n = grid.n_nodes();
  std::vector<std::vector<double>> results(n);
  std::atomic<std::size_t> calls{0}, hits{0};
  parallel_for(n, opts.workers, [&](std::size_t i) {
    const ParameterVector y = grid.node(i);
    const std::uint64_t key = node_key(y.span(), opts.key_salt);
    if (opts.cache) {
      if (auto cached = opts.cache->get(key)) {
        results[i] = std::move(*cached);
        ++hits;
        return;
      }
    }
    try {
      ++calls;
      results[i] = evaluator(y);
    } catch (const std::exception& e) {
      std::ostringstream ss;
      ss << "training failed at node " << i << " (";
      const auto names = grid.space().names();
      for (std::size_t k = 0; k < y.size(); ++k)
        ss << (k ? ", " : "") << names[k] << '=' << format_double(y[k]);
      ss << "): " << e.what();
      throw TrainingError(ss.str());
    }
    if (opts.cache) opts.cache->put(key, results[i]);
  });
  if (stats) {
    stats->evaluator_calls = calls;
    stats->cache_hits = hits;
  }
  const std::size_t width = n ? results[0].size() : 0;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i].size() != width)
      throw TrainingError("training failed at node " + std::to_string(i) +
                          ": evaluator returned " + std::to_string(results[i].size()) +
                          " values, expected " + std::to_string(width));
    for (std::size_t k = 0; k < width; ++k)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = results[i][k];
  }
  return Surrogate(grid, std::move(values), std::move(meta));
}

double legendre_orthonormal(int k, double t) {
  if (k < 0) throw ArgumentError("legendre_orthonormal: negative degree");
  double p0 = 1.0, p1 = t;
  if (k == 0) return 1.0;
  for (int n = 1; n < k; ++n) {
    const double p2 = ((2.0 * n + 1.0) * t * p1 - n * p0) / (n + 1.0);
    p0 = p1;
    p1 = p2;
  }
  return std::sqrt(2.0 * k + 1.0) * p1;
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw ArgumentError("gauss_legendre: n must be >= 1");
  // Golub-Welsch on the symmetric Jacobi matrix.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
    const double v = es.eigenvectors()(0, k);
    weights[static_cast<std::size_t>(k)] = 2.0 * v * v;
  }
}

double PceExpansion::variance(std::size_t output) const {
  double v = 0.0;
  for (Eigen::Index k = 1; k < coefficients.rows(); ++k) {
    const double c = coefficients(k, static_cast<Eigen::Index>(output));
    v += c * c;
  }
  return v;
}

Eigen::VectorXd PceExpansion::evaluate(const ParameterSpace& space, std::span<const double> y) const {
  if (y.size() != static_cast<std::size_t>(dim) || space.dim() != y.size())
    throw ArgumentError("pce evaluation: dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(coefficients.cols());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    double phi = 1.0;
    for (std::size_t n = 0; n < y.size(); ++n) {
      const double t = 2.0 * (y[n] - space.range(n).lo) / space.range(n).width() - 1.0;
      phi *= legendre_orthonormal(terms[k][n], t);
    }
    out += phi * coefficients.row(static_cast<Eigen::Index>(k)).transpose();
  }
  return out;
}

PceExpansion to_pce(const Surrogate& surrogate) {
  const auto& g = surrogate.grid();
  const std::size_t N = g.dim();
  for (const auto& f : g.families())
    if (f.kind() != KnotFamily::Kind::clenshaw_curtis)
      throw UnsupportedError("to_pce: only uniform (Clenshaw-Curtis) families are supported");

  // T_l(alpha, j) = (1/2) int l_j(t) P_alpha(t) dt for the level-l 1D basis.
  std::map<int, Eigen::MatrixXd> transforms;
  auto transform = [&](int level) -> const Eigen::MatrixXd& {
    auto it = transforms.find(level);
    if (it != transforms.end()) return it->second;
    const auto knots = knots_clenshaw_curtis(level_to_knots_doubling(level));
    const int m = static_cast<int>(knots.size());
    std::vector<double> bary(knots.size(), 1.0);
    for (std::size_t j = 0; j < knots.size(); ++j)
      for (std::size_t k = 0; k < knots.size(); ++k)
        if (k != j) bary[j] /= knots[j] - knots[k];
    std::vector<double> gx, gw;
    gauss_legendre(m + 1, gx, gw);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> l(knots.size());
    for (std::size_t q = 0; q < gx.size(); ++q) {
      double denom = 0.0;
      for (std::size_t j = 0; j < knots.size(); ++j) {
        l[j] = bary[j] / (gx[q] - knots[j]);
        denom += l[j];
      }
      for (auto& v : l) v /= denom;
      if (m == 1) l[0] = 1.0;
      for (int a = 0; a < m; ++a) {
        const double pa = legendre_orthonormal(a, gx[q]);
        for (int j = 0; j < m; ++j) T(a, j) += 0.5 * gw[q] * pa * l[static_cast<std::size_t>(j)];
      }
    }
    return transforms.emplace(level, std::move(T)).first->second;
  };

  const auto n_out = static_cast<Eigen::Index>(surrogate.n_outputs());
  std::map<MultiIndex, Eigen::VectorXd> acc;
  for (const auto& tg : g.tensors()) {
    // Data laid out as (m_1, ..., m_N, n_out), row-major.
    std::size_t total = tg.node_ids.size();
    std::vector<double> data(total * static_cast<std::size_t>(n_out));
    for (std::size_t r = 0; r < total; ++r)
      for (Eigen::Index o = 0; o < n_out; ++o)
        data[r * static_cast<std::size_t>(n_out) + static_cast<std::size_t>(o)] =
            surrogate.node_values()(static_cast<Eigen::Index>(tg.node_ids[r]), o);
    std::vector<double> buf(data.size());
    std::size_t pre = 1;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t m = static_cast<std::size_t>(tg.counts[n]);
      std::size_t post = static_cast<std::size_t>(n_out);
      for (std::size_t k = n + 1; k < N; ++k) post *= static_cast<std::size_t>(tg.counts[k]);
      const Eigen::MatrixXd& T = transform(tg.index[n]);
      std::fill(buf.begin(), buf.end(), 0.0);
      for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t a = 0; a < m; ++a)
          for (std::size_t j = 0; j < m; ++j) {
            const double t = T(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j));
            if (t == 0.0) continue;
            const double* src = &data[(p * m + j) * post];
            double* dst = &buf[(p * m + a) * post];
            for (std::size_t q = 0; q < post; ++q) dst[q] += t * src[q];
          }
      data.swap(buf);
      pre *= m;
    }
    std::vector<int> pos(N, 0);
    for (std::size_t r = 0; r < total; ++r) {
      MultiIndex alpha(pos.begin(), pos.end());
      auto [it, inserted] = acc.try_emplace(alpha, Eigen::VectorXd::Zero(n_out));
      for (Eigen::Index o = 0; o < n_out; ++o)
        it->second(o) += tg.coefficient * data[r * static_cast<std::size_t>(n_out) + static_cast<std::size_t>(o)];
      for (std::size_t n = N; n-- > 0;) {
        if (++pos[n] < tg.counts[n]) break;
        pos[n] = 0;
      }
    }
  }

  PceExpansion pce;
  pce.dim = static_cast<int>(N);
  pce.coefficients.resize(static_cast<Eigen::Index>(acc.size()), n_out);
  Eigen::Index k = 0;
  for (auto& [alpha, c] : acc) {
    pce.terms.push_back(alpha);
    pce.coefficients.row(k++) = c.transpose();
  }
  return pce;
}

void save(const Surrogate& surrogate, const std::string& path) {
  json header = header_json(surrogate);
  const std::string body = header.dump();
  header["hash"] = hex64(payload_hash(body, surrogate.node_values()));
  const std::string text = header.dump();

  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write surrogate file " + path);
  const std::uint64_t len = text.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof kFormatVersion);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(len));
  const auto& v = surrogate.node_values();
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(v.size()) * sizeof(double)));
  if (!out) throw Error("cannot write surrogate file " + path);
}

Surrogate load(const std::string& path, const ParameterSpace* expected_space) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open surrogate file " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IncompatibleError(path + ": not a surrogate file");
  if (version != kFormatVersion)
    throw IncompatibleError(path + ": unsupported format version " + std::to_string(version));
  if (len > (1u << 30)) throw IncompatibleError(path + ": corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IncompatibleError(path + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IncompatibleError(path + ": corrupt header: " + e.what());
  }
  try {
    const std::string stored_hash = header.at("hash").get<std::string>();
    header.erase("hash");
    const auto n_nodes = header.at("n_nodes").get<std::size_t>();
    const auto n_out = header.at("n_outputs").get<std::size_t>();
    if (n_nodes > (1u << 24) || n_out > (1u << 20))
      throw IncompatibleError(path + ": implausible sizes");
    Eigen::MatrixXd values(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(n_out));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(n_nodes * n_out * sizeof(double)));
    if (!in) throw IncompatibleError(path + ": truncated node values");
    if (hex64(payload_hash(header.dump(), values)) != stored_hash)
      throw IncompatibleError(path + ": content hash mismatch");

    ParameterSpace space = space_from_json(header.at("space"));
    if (space.signature() != header.at("signature").get<std::string>())
      throw IncompatibleError(path + ": parameter signature mismatch");
    if (expected_space && expected_space->signature() != space.signature())
      throw IncompatibleError(path + ": surrogate space '" + space.signature() +
                              "' differs from the expected '" + expected_space->signature() + "'");
    std::vector<KnotFamily> fams;
    for (const auto& f : header.at("families")) fams.push_back(family_from_json(f));
    MultiIndexSet iset(static_cast<int>(space.dim()),
                       header.at("index_set").get<std::vector<MultiIndex>>());
    SparseGrid grid(space, header.at("level").get<int>(), std::move(iset), std::move(fams));
    if (grid.n_nodes() != n_nodes)
      throw IncompatibleError(path + ": node count does not match the grid description");

    SurrogateMetadata meta;
    const auto& m = header.at("metadata");
    meta.qoi = m.at("qoi").get<std::string>();
    meta.solver_options = m.at("solver_options").get<std::string>();
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.times = m.at("times").get<std::vector<double>>();
    return Surrogate(std::move(grid), std::move(values), std::move(meta));
  } catch (const json::exception& e) {
    throw IncompatibleError(path + ": malformed header: " + e.what());
  } catch (const ArgumentError& e) {
    throw IncompatibleError(path + ": inconsistent header: " + e.what());
  }
}

} // namespace chemouq::sg
