#include "chemouq/json_io.hpp"
#include "chemouq/workbench.hpp"

#include <doctest.h>

#include <filesystem>

using namespace chemouq;
using namespace chemouq::workbench;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("chemouq_wb_" + name);
  fs::remove_all(p);
  return p;
}

json tiny_config(const fs::path& out) {
  json j = json::parse(R"({
    "version": 1,
    "seed": 5,
    "solver": {"n_s": 16, "n_t": 32},
    "validate_solver": {"samples": 2, "check_samples": 3, "time_n_s": 16, "time_max_exp": 6,
                        "fit_min_exp": 3, "space_n_t": 32, "space_max_exp": 3, "max_err": 1, "rms_err": 1,
                        "slope_lo": -10, "slope_hi": 10},
    "surrogate": {"spaces": ["4d"], "level": 2},
    "validate_surrogate": {"space": "4d", "samples": 3, "levels": [1, 2], "max_dm": 1, "rms_dm": 1, "max_di": 1},
    "sensitivity": {"space": "4d", "morris_points": 20, "n_times": 4, "response_points": 3},
    "inversion": {"observations": 8, "map_starts": 2, "acf_lags": 3,
                  "mcmc": {"retain": 20, "burnin": 5, "thin": 1}},
    "forward": {"prior_samples": 50, "ga_samples": 20, "kde_points": 8, "n_times": 3, "leja_level": 2}
  })");
  j["output_dir"] = out.string();
  return j;
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().extension() == ".csv") out[fs::relative(e.path(), dir).string()] = read_text_file(e.path().string());
  return out;
}

} // namespace

TEST_SUITE("workbench") {

TEST_CASE("minimal config takes the defaults") {
  const auto c = parse_config(json{{"version", 1}, {"seed", 3}});
  CHECK(c.seed == 3);
  CHECK(c.solver.n_s == 128);
  CHECK(c.solver.n_t == 256);
  CHECK(c.surrogate.level == 4);
  CHECK(c.validate_solver.samples == 12);
  CHECK(c.validate_solver.check_samples == 60);
  CHECK(c.sensitivity.morris_points == 10000);
  CHECK(c.inversion.y_true == std::vector<double>{200.0, 1300.0, 25e-4, 250.0});
  CHECK(c.inversion.mcmc_retain == 6000);
  CHECK(c.resolved_cache_dir() == (fs::path("chemouq_out") / "cache").string());
}

TEST_CASE("config round trip") {
  auto j = tiny_config("/tmp/x");
  j["spaces"] = {{"nu_only", space_to_json(reduced_space_4d())}};
  j["surrogate"]["spaces"] = {"4d", "nu_only"};
  const auto c = parse_config(j);
  CHECK(c.space("nu_only") == reduced_space_4d());
  CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
}

TEST_CASE("config errors") {
  const json base{{"version", 1}, {"seed", 1}};
  auto with = [&](const json& patch) {
    json j = base;
    j.update(patch);
    return j;
  };
  CHECK_THROWS_AS(parse_config(json{{"version", 1}}), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"version", 2}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"sede", 1}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"solver", {{"n_x", 4}}}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"solver", {{"n_s", "many"}}}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"solver", {{"tau_u", -1.0}}}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"workers", -2}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"inversion", {{"y_true", {1.0, 2.0}}}}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"sensitivity", {{"space", "5d"}}}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"spaces", {{"6d", space_to_json(reduced_space_4d())}}}})), ArgumentError);
  CHECK_THROWS_AS(parse_config(with({{"inversion", {{"mcmc", {{"length", 3}}}}}})), ArgumentError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("stage names") {
  for (Stage s : all_stages()) CHECK(stage_from_string(to_string(s)) == s);
  CHECK(all_stages().size() == 8);
  CHECK_THROWS_AS(stage_from_string("plot"), ArgumentError);
}

TEST_CASE("manifest round trip") {
  const auto dir = fresh_dir("manifest");
  Manifest m;
  m.set("stage.a.config_hash", "01");
  m.set("stage.a.file.x/y.csv", "ff");
  m.set("stage.b.config_hash", "02");
  const auto path = (dir / "manifest.txt").string();
  m.save(path);
  auto back = Manifest::load(path);
  CHECK(back.get("stage.a.config_hash") == "01");
  CHECK(back.files("a") == std::map<std::string, std::string>{{"x/y.csv", "ff"}});
  back.erase_stage("a");
  CHECK(!back.get("stage.a.config_hash"));
  CHECK(back.get("stage.b.config_hash") == "02");
  CHECK(Manifest::load((dir / "absent.txt").string()).files("a").empty());
  fs::remove_all(dir);
}

TEST_CASE("csv parsing") {
  const auto t = parse_csv("a,b\r\n1,2.5\n\n3,-4e-3\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.numbers("b") == std::vector<double>{2.5, -4e-3});
  CHECK_THROWS_AS(t.column("c"), ArgumentError);
}

TEST_CASE("missing upstream artifacts name the stage to run") {
  const auto dir = fresh_dir("deps");
  Workbench wb(parse_config(tiny_config(dir)));
  try {
    wb.run(Stage::forward);
    FAIL("expected DependencyError");
  } catch (const DependencyError& e) {
    CHECK(std::string(e.what()).find("build-surrogate") != std::string::npos);
  }
  CHECK_THROWS_AS(wb.run(Stage::invert), DependencyError);
  CHECK_THROWS_AS(wb.run(Stage::sensitivity), DependencyError);
  fs::remove_all(dir);
}

TEST_CASE("pipeline caching, forcing and determinism") {
  const auto a = fresh_dir("run_a"), b = fresh_dir("run_b");
  auto cfg = parse_config(tiny_config(a));
  Workbench wa(cfg);
  const auto first = wa.run_all();
  for (const auto& r : first) {
    CHECK(!r.skipped);
    CHECK(r.exit_code == 0);
    for (const auto& f : r.files) CHECK(fs::exists(a / f));
  }
  const std::size_t solves = wa.hdg_solves();
  CHECK(solves > 0);

  SUBCASE("second run is a no-op") {
    Workbench again(cfg);
    for (const auto& r : again.run_all()) CHECK(r.skipped);
    CHECK(again.hdg_solves() == 0);
  }
  SUBCASE("forced rerun reproduces the outputs and hits the node cache") {
    const auto before = csv_files(a);
    Workbench again(cfg);
    const auto r = again.run(Stage::build_surrogate, true);
    CHECK(!r.skipped);
    CHECK(again.hdg_solves() == 0);
    for (Stage s : all_stages()) again.run(s, true);
    CHECK(csv_files(a) == before);
  }
  SUBCASE("a tampered artifact triggers a rerun") {
    write_text_file((a / "sensitivity/M_indices.csv").string(), "x\n");
    Workbench again(cfg);
    CHECK(!again.run(Stage::sensitivity).skipped);
    CHECK(read_text_file((a / "sensitivity/M_indices.csv").string()) != "x\n");
  }
  SUBCASE("changing a stage section reruns only that stage") {
    auto changed = cfg;
    changed.sensitivity.morris_points = 21;
    Workbench again(changed);
    CHECK(again.run(Stage::build_surrogate).skipped);
    CHECK(!again.run(Stage::sensitivity).skipped);
  }
  SUBCASE("same seed in another directory with more workers gives identical csv files") {
    auto other = cfg;
    other.output_dir = b.string();
    other.workers = 3;
    Workbench wb(other);
    wb.run_all();
    CHECK(csv_files(b) == csv_files(a));
  }
  SUBCASE("a different seed changes the random outputs") {
    auto other = cfg;
    other.output_dir = b.string();
    other.seed = 6;
    Workbench wb(other);
    wb.run_all();
    CHECK(read_text_file((b / "inversion/data.csv").string()) != read_text_file((a / "inversion/data.csv").string()));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("validation stages fail on tight tolerances") {
  const auto dir = fresh_dir("tight");
  auto j = tiny_config(dir);
  j["validate_solver"]["max_err"] = 1e-9;
  j["validate_surrogate"]["max_dm"] = 1e-12;
  Workbench wb(parse_config(j));
  CHECK(wb.run(Stage::validate_solver).exit_code == 1);
  CHECK(wb.run(Stage::validate_surrogate).exit_code == 1);
  // A skipped stage reports the stored exit code.
  const auto again = wb.run(Stage::validate_solver);
  CHECK(again.skipped);
  CHECK(again.exit_code == 1);
  fs::remove_all(dir);
}

}
