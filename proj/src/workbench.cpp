#include "chemouq/workbench.hpp"

#include "chemouq/bayes.hpp"
#include "chemouq/forward_uq.hpp"
#include "chemouq/json_io.hpp"
#include "chemouq/sensitivity.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace chemouq::workbench {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// One JSON object of the config; keys not read through it are rejected.
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ArgumentError("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer() || (!it->is_number_unsigned() && it->template get<long long>() < 0))
        throw ArgumentError("config: '" + path_ + "." + key + "' must be a non-negative integer");
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ArgumentError("config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ArgumentError("config: unknown key '" + path_ + "." + it.key() + "'");
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ArgumentError("config: " + what);
}

void validate_config(const RunConfig& c) {
  require(c.solver.n_s >= 1 && c.solver.n_t >= 1, "solver.n_s and solver.n_t must be positive");
  c.solver.options.validate();
  const auto& v = c.validate_solver;
  require(v.samples >= 1 && v.check_samples >= 1, "validate_solver sample counts must be positive");
  require(v.time_n_s >= 1 && v.space_n_t >= 1, "validate_solver resolutions must be positive");
  require(v.time_max_exp >= 0 && v.time_max_exp <= 20, "validate_solver.time_max_exp must be in [0, 20]");
  require(v.space_max_exp >= 0 && v.space_max_exp <= 16, "validate_solver.space_max_exp must be in [0, 16]");
  require(v.fit_min_exp >= 0 && v.fit_min_exp < v.time_max_exp,
          "validate_solver.fit_min_exp must be below time_max_exp");
  require(c.surrogate.level >= 1, "surrogate.level must be >= 1");
  require(!c.surrogate.spaces.empty(), "surrogate.spaces must not be empty");
  require(c.validate_surrogate.samples >= 1, "validate_surrogate.samples must be positive");
  for (int w : c.validate_surrogate.levels) require(w >= 1, "validate_surrogate.levels must be >= 1");
  require(c.sensitivity.morris_points >= 1, "sensitivity.morris_points must be positive");
  require(c.sensitivity.n_times >= 1, "sensitivity.n_times must be positive");
  require(c.sensitivity.response_points >= 2, "sensitivity.response_points must be >= 2");
  const auto& inv = c.inversion;
  require(inv.observations >= 1, "inversion.observations must be positive");
  require(inv.noise_std >= 0.0, "inversion.noise_std must be non-negative");
  require(inv.map_starts >= 1, "inversion.map_starts must be positive");
  require(inv.mcmc_retain >= 2 && inv.mcmc_thin >= 1, "inversion MCMC sizes must be positive");
  require(inv.acf_lags < inv.mcmc_retain, "inversion.acf_lags must be below mcmc_retain");
  require(c.forward.prior_samples >= 2 && c.forward.ga_samples >= 2, "forward sample counts must be >= 2");
  require(c.forward.kde_points >= 2, "forward.kde_points must be >= 2");
  require(c.forward.n_times >= 1, "forward.n_times must be positive");
  require(c.forward.leja_level >= 1, "forward.leja_level must be >= 1");
  // Every referenced space must resolve.
  (void)c.space(c.validate_solver.space);
  for (const auto& s : c.surrogate.spaces) (void)c.space(s);
  (void)c.space(c.validate_surrogate.space);
  (void)c.space(c.sensitivity.space);
  const auto inv_space = c.space(inv.space);
  require(inv.y_true.size() == inv_space.dim(), "inversion.y_true has the wrong dimension");
  require(inv.mcmc_widths.empty() || inv.mcmc_widths.size() == inv_space.dim(),
          "inversion.mcmc.widths has the wrong dimension");
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::string file_hash(const std::string& path) { return hex64(fnv1a(read_text_file(path))); }

std::vector<double> solver_times(const ParameterSpace& space, int n_t) {
  std::vector<double> t(static_cast<std::size_t>(n_t) + 1);
  const double T = space.constants().T;
  for (int n = 0; n <= n_t; ++n) t[static_cast<std::size_t>(n)] = T * n / n_t;
  return t;
}

Eigen::MatrixXd uniform_samples(const ParameterSpace& space, std::size_t n, std::uint64_t seed) {
  return forward::sample_prior(space, n, seed);
}

ParameterVector row_vector(const Eigen::MatrixXd& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return ParameterVector(std::move(v));
}

double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

// Least-squares slope of log(err) against log(dt).
double loglog_slope(const std::vector<double>& dt, const std::vector<double>& err) {
  const auto n = static_cast<double>(dt.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < dt.size(); ++k) {
    const double x = std::log(dt[k]), y = std::log(err[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double max_relative_error(const std::vector<double>& ref, const std::vector<double>& approx,
                          std::size_t from) {
  double e = 0.0;
  for (std::size_t k = from; k < ref.size(); ++k)
    e = std::max(e, std::abs(ref[k] - approx[k]) / std::abs(ref[k]));
  return e;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j.at(0).size() : 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j.at(r).at(c).get<double>();
  return m;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? sep : "") + v[k];
  return s;
}

} // namespace

// ---------------------------------------------------------------- config

std::string RunConfig::resolved_cache_dir() const {
  return cache_dir.empty() ? (fs::path(output_dir) / "cache").string() : cache_dir;
}

ParameterSpace RunConfig::space(const std::string& name) const {
  if (const auto it = custom_spaces.find(name); it != custom_spaces.end()) return it->second;
  if (name == "6d") return default_space_6d();
  if (name == "4d") return reduced_space_4d();
  throw ArgumentError("config: unknown parameter space '" + name + "'");
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  Section top(j, "config");
  top.get("version", c.version);
  if (c.version != kConfigVersion)
    throw ArgumentError("config: unsupported version " + std::to_string(c.version) + " (expected " +
                        std::to_string(kConfigVersion) + ")");
  if (!j.contains("seed")) throw ArgumentError("config: 'seed' is required");
  top.get("seed", c.seed);
  top.get("workers", c.workers);
  top.get("output_dir", c.output_dir);
  top.get("cache_dir", c.cache_dir);

  if (const json* sp = top.child("spaces")) {
    if (!sp->is_object()) throw ArgumentError("config: 'spaces' must be an object");
    for (auto it = sp->begin(); it != sp->end(); ++it) {
      if (it.key() == "6d" || it.key() == "4d")
        throw ArgumentError("config: space name '" + it.key() + "' is reserved");
      c.custom_spaces.emplace(it.key(), space_from_json(it.value()));
    }
  }

  if (const json* s = top.child("solver")) {
    Section sec(*s, "solver");
    sec.get("n_s", c.solver.n_s);
    sec.get("n_t", c.solver.n_t);
    json opts = json::object();
    for (const char* k : {"tau_u", "tau_phi", "newton_tol", "newton_max_iter", "coupling"})
      if (const json* v = sec.child(k)) opts[k] = *v;
    c.solver.options = solver_options_from_json(opts);
    sec.finish();
  }
  if (const json* s = top.child("validate_solver")) {
    Section sec(*s, "validate_solver");
    auto& v = c.validate_solver;
    sec.get("space", v.space);
    sec.get("samples", v.samples);
    sec.get("check_samples", v.check_samples);
    sec.get("time_n_s", v.time_n_s);
    sec.get("time_max_exp", v.time_max_exp);
    sec.get("fit_min_exp", v.fit_min_exp);
    sec.get("space_n_t", v.space_n_t);
    sec.get("space_max_exp", v.space_max_exp);
    sec.get("slope_lo", v.slope_lo);
    sec.get("slope_hi", v.slope_hi);
    sec.get("max_err", v.max_err);
    sec.get("rms_err", v.rms_err);
    sec.finish();
  }
  if (const json* s = top.child("surrogate")) {
    Section sec(*s, "surrogate");
    sec.get("spaces", c.surrogate.spaces);
    sec.get("level", c.surrogate.level);
    sec.finish();
  }
  if (const json* s = top.child("validate_surrogate")) {
    Section sec(*s, "validate_surrogate");
    auto& v = c.validate_surrogate;
    sec.get("space", v.space);
    sec.get("samples", v.samples);
    sec.get("levels", v.levels);
    sec.get("max_dm", v.max_dm);
    sec.get("rms_dm", v.rms_dm);
    sec.get("max_di", v.max_di);
    sec.finish();
  }
  if (const json* s = top.child("sensitivity")) {
    Section sec(*s, "sensitivity");
    auto& v = c.sensitivity;
    sec.get("space", v.space);
    sec.get("morris_points", v.morris_points);
    sec.get("threshold", v.threshold);
    sec.get("n_times", v.n_times);
    sec.get("response_points", v.response_points);
    sec.finish();
  }
  if (const json* s = top.child("inversion")) {
    Section sec(*s, "inversion");
    auto& v = c.inversion;
    sec.get("space", v.space);
    sec.get("y_true", v.y_true);
    sec.get("observations", v.observations);
    sec.get("noise_std", v.noise_std);
    sec.get("map_starts", v.map_starts);
    sec.get("acf_lags", v.acf_lags);
    if (const json* m = sec.child("mcmc")) {
      Section mc(*m, "inversion.mcmc");
      mc.get("retain", v.mcmc_retain);
      mc.get("burnin", v.mcmc_burnin);
      mc.get("thin", v.mcmc_thin);
      mc.get("widths", v.mcmc_widths);
      mc.finish();
    }
    sec.finish();
  }
  if (const json* s = top.child("forward")) {
    Section sec(*s, "forward");
    auto& v = c.forward;
    sec.get("prior_samples", v.prior_samples);
    sec.get("ga_samples", v.ga_samples);
    sec.get("kde_points", v.kde_points);
    sec.get("n_times", v.n_times);
    sec.get("leja_level", v.leja_level);
    sec.finish();
  }
  top.finish();
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ArgumentError("config: " + path + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const RunConfig& c) {
  json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir;
  j["cache_dir"] = c.cache_dir;
  if (!c.custom_spaces.empty()) {
    json sp = json::object();
    for (const auto& [name, space] : c.custom_spaces) sp[name] = space_to_json(space);
    j["spaces"] = sp;
  }
  json solver = solver_options_to_json(c.solver.options);
  solver["n_s"] = c.solver.n_s;
  solver["n_t"] = c.solver.n_t;
  j["solver"] = solver;
  const auto& vs = c.validate_solver;
  j["validate_solver"] = {{"space", vs.space},           {"samples", vs.samples},
                          {"check_samples", vs.check_samples}, {"time_n_s", vs.time_n_s},
                          {"time_max_exp", vs.time_max_exp},   {"fit_min_exp", vs.fit_min_exp},
                          {"space_n_t", vs.space_n_t},         {"space_max_exp", vs.space_max_exp},
                          {"slope_lo", vs.slope_lo},           {"slope_hi", vs.slope_hi},
                          {"max_err", vs.max_err},             {"rms_err", vs.rms_err}};
  j["surrogate"] = {{"spaces", c.surrogate.spaces}, {"level", c.surrogate.level}};
  const auto& vg = c.validate_surrogate;
  j["validate_surrogate"] = {{"space", vg.space},   {"samples", vg.samples}, {"levels", vg.levels},
                             {"max_dm", vg.max_dm}, {"rms_dm", vg.rms_dm},   {"max_di", vg.max_di}};
  const auto& se = c.sensitivity;
  j["sensitivity"] = {{"space", se.space},
                      {"morris_points", se.morris_points},
                      {"threshold", se.threshold},
                      {"n_times", se.n_times},
                      {"response_points", se.response_points}};
  const auto& in = c.inversion;
  j["inversion"] = {{"space", in.space},
                    {"y_true", in.y_true},
                    {"observations", in.observations},
                    {"noise_std", in.noise_std},
                    {"map_starts", in.map_starts},
                    {"acf_lags", in.acf_lags},
                    {"mcmc",
                     {{"retain", in.mcmc_retain},
                      {"burnin", in.mcmc_burnin},
                      {"thin", in.mcmc_thin},
                      {"widths", in.mcmc_widths}}}};
  const auto& fw = c.forward;
  j["forward"] = {{"prior_samples", fw.prior_samples},
                  {"ga_samples", fw.ga_samples},
                  {"kde_points", fw.kde_points},
                  {"n_times", fw.n_times},
                  {"leja_level", fw.leja_level}};
  return j;
}

// ---------------------------------------------------------------- stages

std::string to_string(Stage s) {
  switch (s) {
    case Stage::validate_solver: return "validate-solver";
    case Stage::build_surrogate: return "build-surrogate";
    case Stage::validate_surrogate: return "validate-surrogate";
    case Stage::sensitivity: return "sensitivity";
    case Stage::generate_data: return "generate-data";
    case Stage::invert: return "invert";
    case Stage::forward: return "forward";
    case Stage::report: return "report";
  }
  return "unknown";
}

std::vector<Stage> all_stages() {
  return {Stage::validate_solver, Stage::build_surrogate, Stage::validate_surrogate,
          Stage::sensitivity,     Stage::generate_data,   Stage::invert,
          Stage::forward,         Stage::report};
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : all_stages())
    if (to_string(st) == s) return st;
  throw ArgumentError("unknown stage '" + s + "'");
}

// ---------------------------------------------------------------- manifest

Manifest Manifest::load(const std::string& path) {
  Manifest m;
  if (!fs::exists(path)) return m;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw IncompatibleError("manifest: malformed line '" + line + "'");
    m.entries_[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

void Manifest::save(const std::string& path) const {
  std::ostringstream ss;
  for (const auto& [k, v] : entries_) ss << k << " = " << v << '\n';
  write_text_file(path, ss.str());
}

std::optional<std::string> Manifest::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void Manifest::set(const std::string& key, const std::string& value) { entries_[key] = value; }

void Manifest::erase_stage(const std::string& stage) {
  const std::string prefix = "stage." + stage + ".";
  for (auto it = entries_.begin(); it != entries_.end();)
    it = it->first.rfind(prefix, 0) == 0 ? entries_.erase(it) : std::next(it);
}

std::map<std::string, std::string> Manifest::files(const std::string& stage) const {
  const std::string prefix = "stage." + stage + ".file.";
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : entries_)
    if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = v;
  return out;
}

// ---------------------------------------------------------------- csv

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ArgumentError("csv: no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (c >= r.size()) throw ArgumentError("csv: short row");
    out.push_back(std::stod(r[c]));
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ls(line);
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_text_file(path)); }

// ---------------------------------------------------------------- workbench

Workbench::Workbench(RunConfig config) : config_(std::move(config)) { validate_config(config_); }

std::string Workbench::out(const std::string& rel) const {
  return (fs::path(config_.output_dir) / rel).string();
}

std::string Workbench::surrogate_path(const std::string& space, const std::string& qoi, int level) const {
  return "surrogates/" + space + "_" + qoi + "_w" + std::to_string(level) + ".chsg";
}

std::string Workbench::input_hashes(const std::vector<std::string>& rel_paths,
                                    const std::string& needed_stage) const {
  std::string s;
  for (const auto& p : rel_paths) {
    if (!fs::exists(out(p)))
      throw DependencyError("missing " + p + "; run stage '" + needed_stage + "' first");
    s += p + "=" + file_hash(out(p)) + ";";
  }
  return s;
}

std::string Workbench::stage_hash(Stage stage) const {
  const auto& c = config_;
  const json full = config_to_json(c);
  json j;
  j["stage"] = to_string(stage);
  j["version"] = c.version;
  auto space_json = [&](const std::string& name) { return space_to_json(c.space(name)); };
  std::string inputs;
  switch (stage) {
    case Stage::validate_solver:
      j["seed"] = c.seed;
      j["solver"] = full["solver"];
      j["section"] = full["validate_solver"];
      j["space"] = space_json(c.validate_solver.space);
      break;
    case Stage::build_surrogate: {
      j["solver"] = full["solver"];
      j["section"] = full["surrogate"];
      json spaces = json::array();
      for (const auto& s : c.surrogate.spaces) spaces.push_back(space_json(s));
      j["spaces"] = spaces;
      break;
    }
    case Stage::validate_surrogate:
      j["seed"] = c.seed;
      j["solver"] = full["solver"];
      j["section"] = full["validate_surrogate"];
      j["space"] = space_json(c.validate_surrogate.space);
      break;
    case Stage::sensitivity:
      j["seed"] = c.seed;
      j["section"] = full["sensitivity"];
      inputs = input_hashes({surrogate_path(c.sensitivity.space, "M", c.surrogate.level),
                             surrogate_path(c.sensitivity.space, "I", c.surrogate.level)},
                            "build-surrogate");
      break;
    case Stage::generate_data:
      j["seed"] = c.seed;
      j["solver"] = full["solver"];
      j["section"] = {{"space", c.inversion.space},
                      {"y_true", c.inversion.y_true},
                      {"observations", c.inversion.observations},
                      {"noise_std", c.inversion.noise_std}};
      j["space"] = space_json(c.inversion.space);
      break;
    case Stage::invert:
      j["seed"] = c.seed;
      j["section"] = {{"map_starts", c.inversion.map_starts},
                      {"acf_lags", c.inversion.acf_lags},
                      {"mcmc", full["inversion"]["mcmc"]}};
      inputs = input_hashes({surrogate_path(c.inversion.space, "M", c.surrogate.level)}, "build-surrogate");
      inputs += input_hashes({"inversion/data.json"}, "generate-data");
      break;
    case Stage::forward:
      j["seed"] = c.seed;
      j["solver"] = full["solver"];
      j["section"] = full["forward"];
      inputs = input_hashes({surrogate_path(c.inversion.space, "I", c.surrogate.level)}, "build-surrogate");
      inputs += input_hashes({"inversion/ga.json", "inversion/chain.csv"}, "invert");
      break;
    case Stage::report:
      for (const char* p : {"solver/summary.txt", "surrogates/summary.txt", "surrogate_validation/summary.txt",
                            "sensitivity/summary.txt", "inversion/summary.txt", "forward/summary.txt"})
        if (fs::exists(out(p))) inputs += std::string(p) + "=" + file_hash(out(p)) + ";";
      break;
  }
  j["inputs"] = inputs;
  return hex64(fnv1a(j.dump()));
}

StageResult Workbench::run(Stage stage, bool force) {
  const std::string name = to_string(stage);
  const std::string manifest_path = out("manifest.txt");
  const std::string hash = stage_hash(stage);
  Manifest manifest = Manifest::load(manifest_path);

  if (!force && manifest.get("stage." + name + ".config_hash") == hash) {
    const auto files = manifest.files(name);
    bool intact = !files.empty();
    for (const auto& [rel, h] : files)
      if (!fs::exists(out(rel)) || file_hash(out(rel)) != h) intact = false;
    if (intact) {
      StageResult r;
      r.stage = stage;
      r.skipped = true;
      r.exit_code = std::stoi(manifest.get("stage." + name + ".exit_code").value_or("0"));
      for (const auto& [rel, h] : files) r.files.push_back(rel);
      r.summary = name + ": up to date\n";
      return r;
    }
  }

  StageResult r;
  switch (stage) {
    case Stage::validate_solver: r = validate_solver(); break;
    case Stage::build_surrogate: r = build_surrogate(); break;
    case Stage::validate_surrogate: r = validate_surrogate(); break;
    case Stage::sensitivity: r = sensitivity(); break;
    case Stage::generate_data: r = generate_data(); break;
    case Stage::invert: r = invert(); break;
    case Stage::forward: r = forward(); break;
    case Stage::report: r = report(); break;
  }
  r.stage = stage;

  manifest = Manifest::load(manifest_path);
  manifest.erase_stage(name);
  manifest.set("stage." + name + ".config_hash", hash);
  manifest.set("stage." + name + ".exit_code", std::to_string(r.exit_code));
  manifest.set("stage." + name + ".completed", timestamp());
  for (const auto& rel : r.files) manifest.set("stage." + name + ".file." + rel, file_hash(out(rel)));
  manifest.save(manifest_path);
  return r;
}

std::vector<StageResult> Workbench::run_all(bool force) {
  std::vector<StageResult> results;
  for (Stage s : all_stages()) results.push_back(run(s, force));
  return results;
}

std::pair<sg::Surrogate, sg::Surrogate> Workbench::train_pair(const std::string& space_name, int level) {
  const ParameterSpace space = config_.space(space_name);
  const auto grid = sg::build_grid(space, level);
  const auto& sc = config_.solver;
  const auto times = solver_times(space, sc.n_t);
  const std::size_t n_out = times.size();

  std::atomic<std::size_t> solves{0};
  sg::Evaluator eval = [&](const ParameterVector& y) {
    const auto q = hdg::solve_qois(space.resolve(y), sc.n_s, sc.n_t, sc.options);
    ++solves;
    std::vector<double> v = q.center_of_mass.values;
    v.insert(v.end(), q.total_chemoattractant.values.begin(), q.total_chemoattractant.values.end());
    return v;
  };
  sg::DirectoryNodeCache cache(config_.resolved_cache_dir());
  sg::TrainOptions opts;
  opts.workers = config_.workers;
  opts.cache = &cache;
  opts.key_salt = fnv1a(sc.options.canonical() + "|" + std::to_string(sc.n_s) + "|" +
                        std::to_string(sc.n_t) + "|" + space.signature() + "|M,I");
  sg::SurrogateMetadata bundle_meta{"M,I", sc.options.canonical(), config_.seed, {}};
  const auto bundle = sg::train(grid, eval, bundle_meta, opts);
  hdg_solves_ += solves.load();

  sg::SurrogateMetadata mm{"M", sc.options.canonical(), config_.seed, times};
  sg::SurrogateMetadata mi{"I", sc.options.canonical(), config_.seed, times};
  const Eigen::MatrixXd& v = bundle.node_values();
  const auto cols = static_cast<Eigen::Index>(n_out);
  return {sg::Surrogate(grid, v.leftCols(cols), mm), sg::Surrogate(grid, v.rightCols(cols), mi)};
}

sg::Surrogate Workbench::load_surrogate(const std::string& space, const std::string& qoi, int level,
                                        const std::string& needed_stage) const {
  const std::string rel = surrogate_path(space, qoi, level);
  if (!fs::exists(out(rel))) throw DependencyError("missing " + rel + "; run stage '" + needed_stage + "' first");
  const ParameterSpace expected = config_.space(space);
  return sg::load(out(rel), &expected);
}

// ---------------------------------------------------------------- validate-solver

StageResult Workbench::validate_solver() {
  const auto& v = config_.validate_solver;
  const auto& sc = config_.solver;
  const ParameterSpace space = config_.space(v.space);
  StageResult r;

  const auto study = uniform_samples(space, v.samples, substream_seed(config_.seed, "validate-solver.study"));
  const auto check = uniform_samples(space, v.check_samples, substream_seed(config_.seed, "validate-solver.check"));

  auto i_error = [&](const ParameterVector& y, int n_s, int n_t) {
    const auto q = hdg::solve_qois(space.resolve(y), n_s, n_t, sc.options);
    std::vector<double> exact(q.total_chemoattractant.times.size());
    for (std::size_t k = 0; k < exact.size(); ++k)
      exact[k] = closed_form_I(space, y, q.total_chemoattractant.times[k]);
    return std::make_pair(max_relative_error(exact, q.total_chemoattractant.values, 1), q);
  };

  const int n_time = v.time_max_exp + 1, n_space = v.space_max_exp + 1;
  std::vector<double> time_err(v.samples * static_cast<std::size_t>(n_time));
  std::vector<double> space_err(v.samples * static_cast<std::size_t>(n_space));
  parallel_for(v.samples, config_.workers, [&](std::size_t s) {
    const auto y = row_vector(study, static_cast<Eigen::Index>(s));
    for (int e = 0; e < n_time; ++e)
      time_err[s * n_time + e] = i_error(y, v.time_n_s, 1 << e).first;
    for (int e = 0; e < n_space; ++e)
      space_err[s * n_space + e] = i_error(y, 1 << e, v.space_n_t).first;
  });
  hdg_solves_ += v.samples * static_cast<std::size_t>(n_time + n_space);

  struct CheckRow {
    double err = 0, drift = 0;
    int newton = 0;
  };
  std::vector<CheckRow> checks(v.check_samples);
  parallel_for(v.check_samples, config_.workers, [&](std::size_t s) {
    const auto y = row_vector(check, static_cast<Eigen::Index>(s));
    const auto [err, q] = i_error(y, sc.n_s, sc.n_t);
    double drift = 0.0;
    const auto& mass = q.immune_mass.values;
    for (double m : mass) drift = std::max(drift, std::abs(m - mass[0]) / mass[0]);
    checks[s] = {err, drift, q.max_newton_iterations};
  });
  hdg_solves_ += v.check_samples;

  std::ostringstream ts, ss, sl, ck, smp;
  ts << "sample,n_s,n_t,err\n";
  ss << "sample,n_s,n_t,err\n";
  sl << "sample,slope\n";
  ck << "sample,err,mass_drift,max_newton_iterations\n";
  const auto names = space.names();
  smp << "set,sample," << join(names, ",") << '\n';
  std::vector<double> slopes;
  for (std::size_t s = 0; s < v.samples; ++s) {
    std::vector<double> dt, err;
    for (int e = 0; e < n_time; ++e) {
      const double ev = time_err[s * n_time + e];
      ts << s << ',' << v.time_n_s << ',' << (1 << e) << ',' << format_double(ev) << '\n';
      if (e >= v.fit_min_exp) {
        dt.push_back(space.constants().T / (1 << e));
        err.push_back(ev);
      }
    }
    for (int e = 0; e < n_space; ++e)
      ss << s << ',' << (1 << e) << ',' << v.space_n_t << ',' << format_double(space_err[s * n_space + e]) << '\n';
    slopes.push_back(loglog_slope(dt, err));
    sl << s << ',' << format_double(slopes.back()) << '\n';
    smp << "study," << s;
    for (Eigen::Index c = 0; c < study.cols(); ++c) smp << ',' << format_double(study(static_cast<Eigen::Index>(s), c));
    smp << '\n';
  }
  std::vector<double> check_err;
  double max_drift = 0.0;
  int max_newton = 0;
  for (std::size_t s = 0; s < v.check_samples; ++s) {
    ck << s << ',' << format_double(checks[s].err) << ',' << format_double(checks[s].drift) << ','
       << checks[s].newton << '\n';
    check_err.push_back(checks[s].err);
    max_drift = std::max(max_drift, checks[s].drift);
    max_newton = std::max(max_newton, checks[s].newton);
    smp << "check," << s;
    for (Eigen::Index c = 0; c < check.cols(); ++c) smp << ',' << format_double(check(static_cast<Eigen::Index>(s), c));
    smp << '\n';
  }

  const double smin = *std::min_element(slopes.begin(), slopes.end());
  const double smax = *std::max_element(slopes.begin(), slopes.end());
  const bool slope_ok = smin >= v.slope_lo && smax <= v.slope_hi;
  const double emax = max_of(check_err), erms = rms(check_err);
  const bool check_ok = emax <= v.max_err && erms <= v.rms_err;

  std::ostringstream sum;
  sum << "time slopes: min " << format_double(smin) << " max " << format_double(smax) << " (accept ["
      << format_double(v.slope_lo) << ", " << format_double(v.slope_hi) << "]) "
      << (slope_ok ? "ok" : "FAIL") << '\n';
  sum << "check at n_s=" << sc.n_s << " n_t=" << sc.n_t << ": max err " << format_double(emax) << " rms "
      << format_double(erms) << " (accept max <= " << format_double(v.max_err) << ", rms <= "
      << format_double(v.rms_err) << ") " << (check_ok ? "ok" : "FAIL") << '\n';
  sum << "max relative drift of immune mass " << format_double(max_drift) << '\n';
  sum << "max newton iterations " << max_newton << '\n';

  write_text_file(out("solver/time_study.csv"), ts.str());
  write_text_file(out("solver/space_study.csv"), ss.str());
  write_text_file(out("solver/slopes.csv"), sl.str());
  write_text_file(out("solver/check.csv"), ck.str());
  write_text_file(out("solver/samples.csv"), smp.str());
  write_text_file(out("solver/summary.txt"), sum.str());
  r.files = {"solver/time_study.csv", "solver/space_study.csv", "solver/slopes.csv",
             "solver/check.csv",      "solver/samples.csv",     "solver/summary.txt"};
  r.exit_code = slope_ok && check_ok ? 0 : 1;
  r.summary = sum.str();
  return r;
}

// ---------------------------------------------------------------- build-surrogate

StageResult Workbench::build_surrogate() {
  StageResult r;
  std::ostringstream sum;
  const int w = config_.surrogate.level;
  for (const auto& name : config_.surrogate.spaces) {
    const std::size_t before = hdg_solves_;
    auto [m, i] = train_pair(name, w);
    const std::string pm = surrogate_path(name, "M", w), pi = surrogate_path(name, "I", w);
    fs::create_directories(fs::path(out(pm)).parent_path());
    sg::save(m, out(pm));
    sg::save(i, out(pi));
    const std::string nodes = "surrogates/" + name + "_nodes_w" + std::to_string(w) + ".csv";
    write_text_file(out(nodes), m.grid().nodes_csv());
    r.files.insert(r.files.end(), {pm, pi, nodes});
    sum << name << " level " << w << ": " << m.grid().n_nodes() << " nodes, "
        << hdg_solves_ - before << " HDG solves (rest from cache)\n";
  }
  write_text_file(out("surrogates/summary.txt"), sum.str());
  r.files.push_back("surrogates/summary.txt");
  r.summary = sum.str();
  return r;
}

// ---------------------------------------------------------------- validate-surrogate

StageResult Workbench::validate_surrogate() {
  const auto& v = config_.validate_surrogate;
  const auto& sc = config_.solver;
  const ParameterSpace space = config_.space(v.space);
  const auto samples = uniform_samples(space, v.samples, substream_seed(config_.seed, "validate-surrogate"));

  std::vector<hdg::QoiBundle> ref(v.samples);
  parallel_for(v.samples, config_.workers, [&](std::size_t s) {
    ref[s] = hdg::solve_qois(space.resolve(row_vector(samples, static_cast<Eigen::Index>(s))), sc.n_s, sc.n_t,
                             sc.options);
  });
  hdg_solves_ += v.samples;

  std::ostringstream errs, table, sum;
  errs << "level,sample,d_M,d_I\n";
  table << "level,nodes,max_d_M,rms_d_M,max_d_I,rms_d_I\n";
  bool ok = true;
  for (int w : v.levels) {
    const auto [m, i] = train_pair(v.space, w);
    const auto pm = m.evaluate_batch(samples), pi = i.evaluate_batch(samples);
    std::vector<double> dm, di;
    for (std::size_t s = 0; s < v.samples; ++s) {
      const auto row = static_cast<Eigen::Index>(s);
      std::vector<double> sm(pm.cols()), si(pi.cols());
      for (Eigen::Index k = 0; k < pm.cols(); ++k) {
        sm[static_cast<std::size_t>(k)] = pm(row, k);
        si[static_cast<std::size_t>(k)] = pi(row, k);
      }
      dm.push_back(max_relative_error(ref[s].center_of_mass.values, sm, 1));
      di.push_back(max_relative_error(ref[s].total_chemoattractant.values, si, 1));
      errs << w << ',' << s << ',' << format_double(dm.back()) << ',' << format_double(di.back()) << '\n';
    }
    table << w << ',' << m.grid().n_nodes() << ',' << format_double(max_of(dm)) << ','
          << format_double(rms(dm)) << ',' << format_double(max_of(di)) << ',' << format_double(rms(di)) << '\n';
    if (w == config_.surrogate.level) {
      const bool pass = max_of(dm) <= v.max_dm && rms(dm) <= v.rms_dm && max_of(di) <= v.max_di;
      ok = ok && pass;
      sum << "level " << w << ": max d_M " << format_double(max_of(dm)) << " rms d_M " << format_double(rms(dm))
          << " max d_I " << format_double(max_of(di)) << " (accept max d_M <= " << format_double(v.max_dm)
          << ", rms d_M <= " << format_double(v.rms_dm) << ", max d_I <= " << format_double(v.max_di) << ") "
          << (pass ? "ok" : "FAIL") << '\n';
    }
  }
  write_text_file(out("surrogate_validation/errors.csv"), errs.str());
  write_text_file(out("surrogate_validation/levels.csv"), table.str());
  write_text_file(out("surrogate_validation/summary.txt"), sum.str());
  StageResult r;
  r.files = {"surrogate_validation/errors.csv", "surrogate_validation/levels.csv",
             "surrogate_validation/summary.txt"};
  r.exit_code = ok ? 0 : 1;
  r.summary = sum.str();
  return r;
}

// ---------------------------------------------------------------- sensitivity

StageResult Workbench::sensitivity() {
  const auto& c = config_.sensitivity;
  const int w = config_.surrogate.level;
  StageResult r;
  std::ostringstream sum;
  for (const std::string qoi : {"M", "I"}) {
    const auto s = load_surrogate(c.space, qoi, w, "build-surrogate");
    if (s.n_outputs() < 2) throw IncompatibleError("sensitivity: surrogate has no time outputs");
    const auto idx = sensitivity::default_time_indices(s.n_outputs() - 1, c.n_times);
    const auto sobol = sensitivity::sobol_indices(s, idx);
    const auto morris =
        sensitivity::morris_indices(s, c.morris_points, substream_seed(config_.seed, "sensitivity.morris." + qoi), idx);
    const auto curves = sensitivity::response_curves(s, c.response_points, idx);
    const auto all = sensitivity::classify_relevance(sobol, morris, c.threshold);

    // Late window t >= T/2.
    const double half = 0.5 * s.space().constants().T;
    auto late_sobol = sobol;
    auto late_morris = morris;
    late_sobol.per_time.clear();
    late_morris.per_time.clear();
    for (std::size_t k = 0; k < sobol.per_time.size(); ++k)
      if (sobol.per_time[k].t >= half) {
        late_sobol.per_time.push_back(sobol.per_time[k]);
        late_morris.per_time.push_back(morris.per_time[k]);
      }
    const auto late = sensitivity::classify_relevance(late_sobol, late_morris, c.threshold);

    const std::string pi = "sensitivity/" + qoi + "_indices.csv", pr = "sensitivity/" + qoi + "_response.csv";
    write_text_file(out(pi), sensitivity::indices_csv(sobol, morris));
    write_text_file(out(pr), curves.csv());
    r.files.insert(r.files.end(), {pi, pr});
    sum << qoi << " relevant (all times): " << join(all.relevant, " ") << '\n';
    sum << qoi << " negligible (all times): " << join(all.negligible, " ") << '\n';
    sum << qoi << " relevant (t >= T/2): " << join(late.relevant, " ") << '\n';
    sum << qoi << " negligible (t >= T/2): " << join(late.negligible, " ") << '\n';
  }
  write_text_file(out("sensitivity/summary.txt"), sum.str());
  r.files.push_back("sensitivity/summary.txt");
  r.summary = sum.str();
  return r;
}

// ---------------------------------------------------------------- generate-data

StageResult Workbench::generate_data() {
  const auto& c = config_.inversion;
  const auto& sc = config_.solver;
  const ParameterSpace space = config_.space(c.space);
  const auto data = bayes::generate_data(space, ParameterVector(c.y_true), c.observations, c.noise_std,
                                         substream_seed(config_.seed, "generate-data"), sc.n_s, sc.n_t,
                                         sc.options);
  ++hdg_solves_;
  json j;
  j["time_indices"] = data.time_indices;
  j["times"] = data.times;
  j["values"] = data.values;
  j["noise_std"] = data.noise_std;
  j["y_true"] = data.y_true.values;
  j["seed"] = data.seed;
  j["n_t"] = data.n_t;
  j["space"] = space_to_json(space);
  write_text_file(out("inversion/data.json"), j.dump(1) + "\n");
  write_text_file(out("inversion/data.csv"), data.csv());
  StageResult r;
  r.files = {"inversion/data.json", "inversion/data.csv"};
  r.summary = std::to_string(data.size()) + " observations of M with noise std " + format_double(c.noise_std) + "\n";
  return r;
}

// ---------------------------------------------------------------- invert

namespace {

bayes::DataSet load_data(const std::string& path) {
  const json j = json::parse(read_text_file(path));
  bayes::DataSet d;
  d.time_indices = j.at("time_indices").get<std::vector<std::size_t>>();
  d.times = j.at("times").get<std::vector<double>>();
  d.values = j.at("values").get<std::vector<double>>();
  d.noise_std = j.at("noise_std").get<double>();
  d.y_true = ParameterVector(j.at("y_true").get<std::vector<double>>());
  d.seed = j.at("seed").get<std::uint64_t>();
  d.n_t = j.at("n_t").get<int>();
  return d;
}

std::string acf_csv(const bayes::Autocorrelation& a, const std::vector<std::string>& names) {
  std::ostringstream ss;
  ss << "lag," << join(names, ",") << '\n';
  for (Eigen::Index l = 0; l < a.values.rows(); ++l) {
    ss << l;
    for (Eigen::Index c = 0; c < a.values.cols(); ++c) ss << ',' << format_double(a.values(l, c));
    ss << '\n';
  }
  return ss.str();
}

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& names) {
  std::ostringstream ss;
  ss << "parameter," << join(names, ",") << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ss << names[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.cols(); ++c) ss << ',' << format_double(m(r, c));
    ss << '\n';
  }
  return ss.str();
}

} // namespace

StageResult Workbench::invert() {
  const auto& c = config_.inversion;
  const auto data = load_data(out("inversion/data.json"));
  const auto surrogate = load_surrogate(c.space, "M", config_.surrogate.level, "build-surrogate");
  const bayes::Misfit misfit(surrogate, data);
  const ParameterSpace& space = misfit.space();
  const auto names = space.names();
  StageResult r;
  std::ostringstream sum;

  const auto map = bayes::map_estimate(misfit, c.map_starts, substream_seed(config_.seed, "invert.map"),
                                       config_.workers);
  const double sigma = bayes::noise_estimate(misfit, map.y);
  json jm;
  jm["y"] = map.y.values;
  jm["objective"] = map.objective;
  jm["sigma_tilde"] = sigma;
  jm["restarts"] = map.restarts;
  jm["improved"] = map.improved;
  write_text_file(out("inversion/map.json"), jm.dump(1) + "\n");
  r.files.push_back("inversion/map.json");
  sum << "map";
  for (std::size_t n = 0; n < names.size(); ++n) sum << ' ' << names[n] << '=' << format_double(map.y[n]);
  sum << "\nsum of squares " << format_double(map.objective) << ", sigma_tilde " << format_double(sigma)
      << ", improved starts " << map.improved << "/" << map.restarts << '\n';

  const auto prior = bayes::prior_stats(space);
  json jg;
  try {
    const auto gp = bayes::gaussian_posterior(misfit, map.y, sigma);
    jg["ill_posed"] = false;
    jg["mean"] = gp.mean.values;
    jg["covariance"] = matrix_json(gp.covariance);
    jg["sigma"] = gp.sigma;
    write_text_file(out("inversion/ga.txt"), gp.text(names));
    const bayes::MarginalStats post{gp.mean.values, gp.stddev()};
    write_text_file(out("inversion/concentration_ga.csv"),
                    bayes::concentration_csv(names, prior, post, bayes::concentration(prior, post)));
    r.files.insert(r.files.end(), {"inversion/ga.txt", "inversion/concentration_ga.csv"});
    sum << "ga std";
    for (std::size_t n = 0; n < names.size(); ++n) sum << ' ' << names[n] << '=' << format_double(post.stddev[n]);
    sum << '\n';
  } catch (const bayes::IllPosedError& e) {
    jg["ill_posed"] = true;
    jg["message"] = e.what();
    sum << "ga: " << e.what() << '\n';
  }
  write_text_file(out("inversion/ga.json"), jg.dump(1) + "\n");
  r.files.push_back("inversion/ga.json");

  bayes::SliceOptions so;
  so.n_retain = c.mcmc_retain;
  so.burnin = c.mcmc_burnin;
  so.thin = c.mcmc_thin;
  so.widths = c.mcmc_widths;
  const auto chain = bayes::slice_sample(misfit, sigma, map.y, so, substream_seed(config_.seed, "invert.mcmc"));
  write_text_file(out("inversion/chain.csv"), chain.csv(names));
  const auto acf = bayes::autocorrelation(chain.samples, c.acf_lags);
  write_text_file(out("inversion/acf.csv"), acf_csv(acf, names));
  const auto corr = bayes::correlation_matrix(chain.samples);
  write_text_file(out("inversion/correlation.csv"), matrix_csv(corr.R, names));
  const auto post = bayes::sample_stats(chain.samples);
  write_text_file(out("inversion/concentration_mcmc.csv"),
                  bayes::concentration_csv(names, prior, post, bayes::concentration(prior, post)));
  r.files.insert(r.files.end(), {"inversion/chain.csv", "inversion/acf.csv", "inversion/correlation.csv",
                                 "inversion/concentration_mcmc.csv"});
  sum << "mcmc " << chain.samples.rows() << " retained of " << chain.raw_sweeps << " sweeps, "
      << chain.evaluations << " posterior evaluations\nmcmc std";
  for (std::size_t n = 0; n < names.size(); ++n) sum << ' ' << names[n] << '=' << format_double(post.stddev[n]);
  sum << '\n';

  write_text_file(out("inversion/summary.txt"), sum.str());
  r.files.push_back("inversion/summary.txt");
  r.summary = sum.str();
  return r;
}

// ---------------------------------------------------------------- forward

StageResult Workbench::forward() {
  const auto& c = config_.forward;
  const auto& sc = config_.solver;
  const std::string space_name = config_.inversion.space;
  const auto surrogate_i = load_surrogate(space_name, "I", config_.surrogate.level, "build-surrogate");
  const ParameterSpace& space = surrogate_i.space();
  const json jg = json::parse(read_text_file(out("inversion/ga.json")));
  const auto chain_table = read_csv(out("inversion/chain.csv"));
  const auto names = space.names();
  if (chain_table.header != names) throw IncompatibleError("forward: chain columns do not match the space");
  StageResult r;
  std::ostringstream sum;

  const auto idx = sensitivity::default_time_indices(surrogate_i.n_outputs() - 1, c.n_times);
  auto emit = [&](const forward::Ensemble& e, const forward::ConcentrationSeries* cf) {
    const std::string tag = forward::to_string(e.provenance);
    const std::string ps = "forward/stats_" + tag + ".csv", pk = "forward/kde_" + tag + ".csv";
    write_text_file(out(ps), forward::statistics_csv(forward::time_statistics(e), cf));
    write_text_file(out(pk), forward::kde_csv(e, idx, c.kde_points));
    r.files.insert(r.files.end(), {ps, pk});
    sum << tag << ": " << e.values.rows() << " samples (" << e.rejected << " rejected)\n";
  };

  const auto prior = forward::propagate(
      surrogate_i, forward::sample_prior(space, c.prior_samples, substream_seed(config_.seed, "forward.prior")),
      forward::Provenance::prior);
  const auto prior_stats = forward::time_statistics(prior);
  emit(prior, nullptr);

  auto report_cf = [&](const std::string& tag, const forward::ConcentrationSeries& cf) {
    sum << tag << " cf at T " << format_double(cf.cf.back()) << ", min over reported times ";
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t k : idx) m = std::min(m, cf.cf[k]);
    sum << format_double(m) << '\n';
  };

  std::optional<bayes::GaussianSamples> draws;
  bayes::GaussianPosterior gp;
  if (jg.at("ill_posed").get<bool>()) {
    sum << "ga: skipped, the Gaussian approximation is ill posed\n";
  } else {
    gp.mean = ParameterVector(jg.at("mean").get<std::vector<double>>());
    gp.covariance = matrix_from_json(jg.at("covariance"));
    gp.sigma = jg.at("sigma").get<double>();
    try {
      draws = bayes::sample_gaussian(gp, c.ga_samples, substream_seed(config_.seed, "forward.ga"), space);
    } catch (const DomainError& e) {
      sum << "ga: skipped, " << e.what() << '\n';
    }
  }
  if (draws) {
    const auto families = forward::leja_families(gp, space, sg::level_to_knots_linear(c.leja_level));
    const auto grid = sg::build_grid(space, c.leja_level, families);
    const auto times = solver_times(space, sc.n_t);
    std::atomic<std::size_t> solves{0};
    sg::Evaluator eval = [&](const ParameterVector& y) {
      ++solves;
      return hdg::solve_qois(space.resolve(y), sc.n_s, sc.n_t, sc.options).total_chemoattractant.values;
    };
    sg::DirectoryNodeCache cache(config_.resolved_cache_dir());
    sg::TrainOptions opts;
    opts.workers = config_.workers;
    opts.cache = &cache;
    opts.key_salt = fnv1a(sc.options.canonical() + "|" + std::to_string(sc.n_s) + "|" + std::to_string(sc.n_t) +
                          "|" + space.signature() + "|I");
    const auto leja = sg::train(grid, eval, {"I", sc.options.canonical(), config_.seed, times}, opts);
    hdg_solves_ += solves.load();
    sg::save(leja, out("forward/leja_I.chsg"));
    r.files.push_back("forward/leja_I.chsg");

    const auto ga = forward::propagate(leja, draws->samples, forward::Provenance::ga);
    const auto cf = forward::concentration_series(prior_stats, forward::time_statistics(ga));
    emit(ga, &cf);
    sum << "ga gaussian draws rejected outside the box: " << draws->rejected
        << (draws->high_rejection ? " (more than half)" : "") << ", leja surrogate " << grid.n_nodes() << " nodes\n";
    report_cf("ga", cf);
  }

  Eigen::MatrixXd chain(static_cast<Eigen::Index>(chain_table.rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t n = 0; n < names.size(); ++n) {
    const auto col = chain_table.numbers(names[n]);
    for (std::size_t k = 0; k < col.size(); ++k)
      chain(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)) = col[k];
  }
  const auto mcmc = forward::propagate(surrogate_i, chain, forward::Provenance::mcmc);
  const auto cf = forward::concentration_series(prior_stats, forward::time_statistics(mcmc));
  emit(mcmc, &cf);
  report_cf("mcmc", cf);

  write_text_file(out("forward/summary.txt"), sum.str());
  r.files.push_back("forward/summary.txt");
  r.summary = sum.str();
  return r;
}

// ---------------------------------------------------------------- report

StageResult Workbench::report() {
  std::ostringstream rep;
  const auto& vs = config_.validate_solver;
  rep << "chemouq report\n";
  rep << "seed " << config_.seed << ", solver n_s=" << config_.solver.n_s << " n_t=" << config_.solver.n_t
      << ", surrogate level " << config_.surrogate.level << '\n';
  rep << "desk-scale time study: N_t = 2^0 .. 2^" << vs.time_max_exp << " at N_s = " << vs.time_n_s
      << " (slope fitted from 2^" << vs.fit_min_exp << ")\n";
  const std::vector<std::pair<std::string, std::string>> parts = {
      {"validate-solver", "solver/summary.txt"},
      {"build-surrogate", "surrogates/summary.txt"},
      {"validate-surrogate", "surrogate_validation/summary.txt"},
      {"sensitivity", "sensitivity/summary.txt"},
      {"invert", "inversion/summary.txt"},
      {"forward", "forward/summary.txt"}};
  for (const auto& [stage, rel] : parts) {
    rep << "\n[" << stage << "]\n";
    rep << (fs::exists(out(rel)) ? read_text_file(out(rel)) : std::string("not run\n"));
  }
  write_text_file(out("report.txt"), rep.str());
  StageResult r;
  r.files = {"report.txt"};
  r.summary = rep.str();
  return r;
}

} // namespace chemouq::workbench
