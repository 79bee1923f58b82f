#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dbat/config.hpp"

namespace dbat {

inline constexpr const char* kVersion = "0.1.0";

// Runs one experiment end to end and writes everything under cfg.output_dir:
// manifest.json, metrics.csv, models/ and figure-data CSVs. Throws on
// failure; see exit_code_for().
void run_experiment(const RunConfig& cfg, std::ostream& log);

// Sweep over alphas (sorted descending) with dbat-sequential training on the
// config's dataset. Writes sweep_summary.csv next to the usual outputs.
void run_alpha_sweep(const RunConfig& cfg, std::ostream& log);

// Exit code for an exception escaping a run: 2 config, 3 data, 4 numeric,
// 1 anything else.
int exit_code_for(const std::exception& e);

// Command entry points; print diagnostics to `err` and return an exit code.
int command_run(const std::filesystem::path& config, std::ostream& out, std::ostream& err);
int command_sweep(const std::filesystem::path& config, const std::vector<double>& alphas,
                  std::ostream& out, std::ostream& err);
// Prints the posterior table and returns 0 when it matches the prediction.
int command_theorem(std::size_t grid, std::ostream& out, std::ostream& err);

}  // namespace dbat
