#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "bnnlv/active_learning.hpp"
#include "bnnlv/alpha_training.hpp"
#include "bnnlv/hmc.hpp"
#include "bnnlv/policy.hpp"
#include "bnnlv/uncertainty.hpp"

namespace bnnlv::cli {

// Exit codes shared by the library entry points and the binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitPartialFailure = 3;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message) {}
};

struct ExperimentConfig {
  std::string kind;     // train | decompose | active-learn | policy-search | eval
  std::string problem = "hetero";
  std::uint64_t seed = 1;
  std::string out_dir = "runs/out";
  std::string scale = "desk";  // desk | paper
  int workers = 1;
  std::string checkpoint;  // optional input checkpoint

  // Model block.
  std::vector<int> hidden = {20, 20};
  double gamma_z = 1.0;
  double lambda_w = 1.0;
  double noise_init = 0.1;
  int data_n = 0;  // 0 -> preset default

  std::string inference = "alpha";  // alpha | hmc
  inference::AlphaTrainConfig alpha;
  inference::HmcConfig hmc;

  uncertainty::DecompositionConfig decomposition;
  int grid_points = 101;     // 1-D decomposition grid
  int grid_points_2d = 11;   // per-axis grid for the 2-D problem

  al::AlLoopConfig al;
  std::vector<std::string> al_methods = {"mutual_information", "total_entropy", "gp_entropy"};

  policy::PolicyTrainConfig policy_cfg;
  std::vector<std::pair<double, double>> risk_grid = {{0.0, 0.0}, {2.0, 0.0}};
  int policy_seeds = 3;
  int eval_rollouts = 50;
  int model_rollouts = 50;
  int eval_starts = 100;
  int eval_samples = 100;  // S for the eval subcommand

  void validate() const;
};

// Parses the JSON text, applies the scale preset, validates. Throws
// ConfigError with a field path on bad input.
ExperimentConfig parse_config(const std::string& json_text);

// Runs the configured experiment, writing every artifact plus a manifest
// under cfg.out_dir. Returns an exit code.
int run(const ExperimentConfig& cfg, std::ostream& log);

// Aggregates a run directory's CSVs into summary tables (mean +/- standard
// error); idempotent. Returns an exit code.
int report(const std::filesystem::path& run_dir, std::ostream& out);

}  // namespace bnnlv::cli
