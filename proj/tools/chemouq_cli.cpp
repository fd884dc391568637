#include "chemouq/workbench.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

using namespace chemouq;

int main(int argc, char** argv) {
  CLI::App app{"chemouq: uncertainty quantification pipeline for a 1D chemotaxis model"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out_dir;
  bool force = false;

  std::vector<std::pair<CLI::App*, workbench::Stage>> subs;
  for (workbench::Stage st : workbench::all_stages()) {
    CLI::App* sub = app.add_subcommand(workbench::to_string(st));
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "global seed (overrides the config)");
    sub->add_option("--workers", workers, "worker threads (0 = all cores)");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_flag("--force", force, "rerun even when the manifest says the stage is up to date");
    subs.emplace_back(sub, st);
  }
  app.get_subcommand("build-surrogate")->description("train M and I surrogates on every configured space");
  app.get_subcommand("validate-solver")->description("time and space convergence studies against the closed form");
  app.get_subcommand("validate-surrogate")->description("relative discrepancy of surrogates against direct solves");
  app.get_subcommand("sensitivity")->description("Sobol and Morris indices, response curves, relevance");
  app.get_subcommand("generate-data")->description("noisy synthetic observations of M");
  app.get_subcommand("invert")->description("MAP, Gaussian approximation and slice-sampling MCMC");
  app.get_subcommand("forward")->description("propagate prior and posterior samples through the I surrogate");
  app.get_subcommand("report")->description("collect stage summaries into report.txt");

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json j = nlohmann::json::parse(read_text_file(config_path));
    if (seed) j["seed"] = *seed;
    if (workers) j["workers"] = *workers;
    if (out_dir) j["output_dir"] = *out_dir;
    workbench::Workbench wb(workbench::parse_config(j));

    for (const auto& [sub, st] : subs) {
      if (!sub->parsed()) continue;
      const auto r = wb.run(st, force);
      std::cout << r.summary;
      if (!r.skipped) std::cout << to_string(st) << ": " << wb.hdg_solves() << " HDG solves\n";
      for (const auto& f : r.files) std::cout << "  " << f << '\n';
      return r.exit_code;
    }
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "error: " << config_path << ": " << e.what() << '\n';
    return 2;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
