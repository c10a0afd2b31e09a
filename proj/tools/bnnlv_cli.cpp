#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "bnnlv/experiment.hpp"
#include "bnnlv/util.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::int64_t seed = -1;
  std::string out_dir;
  std::string scale;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "JSON experiment config");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
  cmd->add_option("--scale", flags.scale, "desk or paper (overrides config)")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--workers", flags.workers, "parallel workers (overrides config)");
}

int run_kind(const std::string& kind, const CommonFlags& flags) {
  using namespace bnnlv;
  std::string text = flags.config_path.empty() ? "{}" : util::read_file(flags.config_path);
  try {
    // CLI overrides are applied to the JSON before parsing so the manifest's
    // resolved config reflects them.
    auto j = nlohmann::json::parse(text);
    j["kind"] = kind;
    if (flags.seed >= 0) j["seed"] = static_cast<std::uint64_t>(flags.seed);
    if (!flags.out_dir.empty()) j["out_dir"] = flags.out_dir;
    if (!flags.scale.empty()) j["scale"] = flags.scale;
    if (flags.workers > 0) j["workers"] = flags.workers;
    cli::ExperimentConfig cfg = cli::parse_config(j.dump());
    return cli::run(cfg, std::cout);
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kExitConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: <root>: " << e.what() << "\n";
    return cli::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-variable Bayesian network uncertainty toolkit"};
  app.require_subcommand(1);

  CommonFlags train_flags, decompose_flags, al_flags, policy_flags, eval_flags;
  CLI::App* train = app.add_subcommand("train", "fit a model and write a checkpoint");
  add_common(train, train_flags, false);
  CLI::App* decompose = app.add_subcommand("decompose", "uncertainty decomposition over a grid");
  add_common(decompose, decompose_flags, false);
  CLI::App* active = app.add_subcommand("active-learn", "acquisition comparison loop");
  add_common(active, al_flags, false);
  CLI::App* policy = app.add_subcommand("policy-search", "risk-sensitive policy search");
  add_common(policy, policy_flags, false);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on fresh test data");
  add_common(eval, eval_flags, false);

  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "aggregate a run directory");
  report->add_option("--dir", report_dir, "run directory with a manifest")->required();

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return run_kind("train", train_flags);
  if (decompose->parsed()) return run_kind("decompose", decompose_flags);
  if (active->parsed()) return run_kind("active-learn", al_flags);
  if (policy->parsed()) return run_kind("policy-search", policy_flags);
  if (eval->parsed()) return run_kind("eval", eval_flags);
  if (report->parsed()) {
    try {
      return bnnlv::cli::report(report_dir, std::cout);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return bnnlv::cli::kExitFailure;
    }
  }
  return bnnlv::cli::kExitFailure;
}
