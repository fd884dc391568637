#pragma once

#include "chemouq/hdg.hpp"
#include "chemouq/model.hpp"
#include "chemouq/sparse_grid.hpp"
#include "chemouq/util.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chemouq::workbench {

inline constexpr int kConfigVersion = 1;

struct SolverConfig {
  int n_s = 128;
  int n_t = 256;
  hdg::SolverOptions options;
};

struct ValidateSolverConfig {
  std::string space = "6d";
  std::size_t samples = 12;          // convergence studies
  std::size_t check_samples = 60;    // accuracy check at the working resolution
  int time_n_s = 256;
  int time_max_exp = 10;             // N_t = 2^0 .. 2^time_max_exp
  int fit_min_exp = 4;               // slope fitted over 2^fit_min_exp .. 2^time_max_exp
  int space_n_t = 1024;
  int space_max_exp = 8;             // N_s = 2^0 .. 2^space_max_exp
  double slope_lo = 0.8;
  double slope_hi = 1.2;
  double max_err = 0.03;
  double rms_err = 0.02;
};

struct SurrogateConfig {
  std::vector<std::string> spaces{"6d", "4d"};
  int level = 4;
};

struct ValidateSurrogateConfig {
  std::string space = "6d";
  std::size_t samples = 60;
  std::vector<int> levels{1, 2, 3, 4};
  double max_dm = 0.04;
  double rms_dm = 0.015;
  double max_di = 0.001;
};

struct SensitivityConfig {
  std::string space = "6d";
  std::size_t morris_points = 10000;
  double threshold = 0.05;
  std::size_t n_times = 10;
  std::size_t response_points = 21;
};

struct InversionConfig {
  std::string space = "4d";
  std::vector<double> y_true{200.0, 1300.0, 25e-4, 250.0};
  std::size_t observations = 30;
  double noise_std = 2.0;
  std::size_t map_starts = 100;
  std::size_t mcmc_retain = 6000;
  std::size_t mcmc_burnin = 2000;
  std::size_t mcmc_thin = 100;
  std::vector<double> mcmc_widths;  // empty: |Gamma_n| / 10
  std::size_t acf_lags = 50;
};

struct ForwardConfig {
  std::size_t prior_samples = 10000;
  std::size_t ga_samples = 10000;
  std::size_t kde_points = 512;
  std::size_t n_times = 10;
  int leja_level = 4;
};

// Everything a pipeline run depends on. Serialized as versioned JSON.
struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 20240917;
  unsigned workers = 1;
  std::string output_dir = "chemouq_out";
  std::string cache_dir;  // empty: <output_dir>/cache
  std::map<std::string, ParameterSpace> custom_spaces;
  SolverConfig solver;
  ValidateSolverConfig validate_solver;
  SurrogateConfig surrogate;
  ValidateSurrogateConfig validate_surrogate;
  SensitivityConfig sensitivity;
  InversionConfig inversion;
  ForwardConfig forward;

  std::string resolved_cache_dir() const;
  // "6d", "4d" or a key of custom_spaces. Throws ArgumentError otherwise.
  ParameterSpace space(const std::string& name) const;
};

// Throws ArgumentError on unknown keys, wrong types, a missing seed or an
// unsupported version.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& c);

enum class Stage {
  validate_solver,
  build_surrogate,
  validate_surrogate,
  sensitivity,
  generate_data,
  invert,
  forward,
  report
};

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
// Stages in pipeline order.
std::vector<Stage> all_stages();

// Key-value manifest: "stage.<name>.config_hash", "stage.<name>.file.<path>"
// (content hash) and "stage.<name>.completed" (timestamp).
class Manifest {
public:
  static Manifest load(const std::string& path);
  void save(const std::string& path) const;

  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void erase_stage(const std::string& stage);
  std::map<std::string, std::string> files(const std::string& stage) const;

private:
  std::map<std::string, std::string> entries_;
};

struct StageResult {
  Stage stage = Stage::report;
  bool skipped = false;
  int exit_code = 0;  // nonzero when a validation check failed
  std::vector<std::string> files;  // relative to the output directory
  std::string summary;
};

// Runs pipeline stages against one output directory. Missing upstream
// artifacts raise DependencyError naming the stage to run first.
class Workbench {
public:
  explicit Workbench(RunConfig config);

  const RunConfig& config() const { return config_; }
  StageResult run(Stage stage, bool force = false);
  // Runs every stage in order; stops at the first exception.
  std::vector<StageResult> run_all(bool force = false);

  // Number of HDG solves performed by this instance (cache misses only).
  std::size_t hdg_solves() const { return hdg_solves_; }

  std::string surrogate_path(const std::string& space, const std::string& qoi, int level) const;

private:
  std::string out(const std::string& rel) const;
  std::string stage_hash(Stage stage) const;
  std::string input_hashes(const std::vector<std::string>& rel_paths, const std::string& needed_stage) const;

  StageResult validate_solver();
  StageResult build_surrogate();
  StageResult validate_surrogate();
  StageResult sensitivity();
  StageResult generate_data();
  StageResult invert();
  StageResult forward();
  StageResult report();

  // M and I surrogates of one space at one level, trained through the node cache.
  std::pair<sg::Surrogate, sg::Surrogate> train_pair(const std::string& space_name, int level);
  sg::Surrogate load_surrogate(const std::string& space, const std::string& qoi, int level,
                               const std::string& needed_stage) const;

  RunConfig config_;
  std::size_t hdg_solves_ = 0;
};

// Parsed CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws ArgumentError if absent
  std::vector<double> numbers(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

} // namespace chemouq::workbench
