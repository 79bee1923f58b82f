#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dbat/config.hpp"
#include "dbat/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"D-BAT: diverse ensembles through disagreement on out-of-distribution data"};
  app.set_version_flag("--version", std::string(dbat::kVersion));
  app.require_subcommand(1);

  std::string config;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config or manifest");
  run->add_option("config", config, "key = value config file, or manifest.json")->required();

  std::string sweep_config, alphas;
  auto* sweep = app.add_subcommand("sweep", "Train dbat-sequential once per alpha and pick the best by validation");
  sweep->add_option("config", sweep_config, "config file")->required();
  sweep->add_option("--alphas", alphas, "comma-separated alphas, e.g. 1,0.5,0.1")->required();

  std::size_t grid = 1001;
  auto* theorem = app.add_subcommand("theorem", "Check the diversity theorem on binary features");
  theorem->add_option("--grid", grid, "brute-force grid resolution")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run) return dbat::command_run(config, std::cout, std::cerr);
  if (*sweep) {
    try {
      return dbat::command_sweep(sweep_config, dbat::parse_double_list(alphas), std::cout, std::cerr);
    } catch (const dbat::ConfigError& e) {
      std::cerr << "dbat: config error: " << e.what() << "\n";
      return 2;
    }
  }
  return dbat::command_theorem(grid, std::cout, std::cerr);
}
