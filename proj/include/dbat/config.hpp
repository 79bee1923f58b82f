#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dbat/datasets.hpp"
#include "dbat/error.hpp"
#include "dbat/training.hpp"

namespace dbat {

enum class Experiment { toy2d, shortcut, dominoes_idx, interpolation, theorem, alpha_sweep };

const char* to_string(Experiment e);

// Bad configuration text. line() is 1-based, 0 when not tied to a line.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : Error(line ? "config line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct RunConfig {
  Experiment experiment = Experiment::toy2d;
  std::filesystem::path output_dir;
  std::string run_id = "run";
  std::uint64_t seed = 0;
  std::size_t ensemble_size = 2;

  // toy2d / interpolation
  std::size_t n_per_class = 500;
  std::size_t grid_side = 41;
  // shortcut (recipe seed comes from `seed`)
  ShortcutRecipe shortcut;
  // dominoes-idx
  std::filesystem::path top_images, top_labels, bottom_images, bottom_labels;
  std::vector<int> top_classes{0, 1};
  std::vector<int> bottom_classes{0, 1};
  std::vector<int> ood_classes{2, 3, 4, 5, 6, 7, 8, 9};

  std::vector<std::size_t> hidden_dims{32};
  TrainConfig train;

  // alpha-sweep
  std::vector<double> alphas{1.0, 0.5, 0.1};
  Experiment sweep_dataset = Experiment::shortcut;

  // theorem
  std::size_t theorem_grid = 1001;
  std::size_t theorem_iterations = 5000;
  double theorem_learning_rate = 1.0;

  // Every key with its resolved value, in a stable order; parse_config of the
  // rendered text reproduces this config.
  std::map<std::string, std::string> resolved() const;
  std::string render() const;
};

// Parses `key = value` lines. Keys are dotted for nesting (train.alpha);
// '-' and '_' are interchangeable in keys; '#' starts a comment.
// `experiment` and `output_dir` are required.
RunConfig parse_config(std::string_view text);

// Reads a key=value file, or a run manifest (JSON with a "config" object).
RunConfig load_config(const std::filesystem::path& path);

// DBAT_SEED replaces the config seed when set.
void apply_env_overrides(RunConfig& cfg);

std::vector<double> parse_double_list(std::string_view text);

}  // namespace dbat
