#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bnnlv/experiment.hpp"
#include "bnnlv/util.hpp"

using namespace bnnlv;
using namespace bnnlv::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "bnnlv_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Tiny-but-real configs keep these runs in seconds.
std::string tiny_decompose_config(const fs::path& out, int seed = 3) {
  std::ostringstream ss;
  ss << R"({
    "kind": "decompose",
    "problem": "hetero",
    "seed": )"
     << seed << R"(,
    "out_dir": ")"
     << out.string() << R"(",
    "scale": "desk",
    "model": {"hidden": [8, 8]},
    "data": {"n": 80},
    "inference": {"method": "alpha", "epochs": 40, "minibatch": 40, "k_mc": 2},
    "decomposition": {"k": 5, "m_weights": 20, "l_noise": 20},
    "grid": {"points": 9}
  })";
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing applies presets and validates") {
  SUBCASE("desk preset fills defaults") {
    ExperimentConfig cfg = parse_config(R"({"kind": "train", "problem": "hetero"})");
    CHECK(cfg.alpha.epochs == 2000);
    CHECK(cfg.alpha.minibatch == 75);
    CHECK(cfg.data_n == 750);
    CHECK(cfg.decomposition.m_weights == 200);
    CHECK(cfg.hmc.burn_in == 20000);
    CHECK(cfg.al.iterations == 30);
    CHECK(cfg.al.train.epochs == 500);
    CHECK(cfg.al.test_size == 500);
  }
  SUBCASE("paper preset scales up") {
    ExperimentConfig cfg =
        parse_config(R"({"kind": "train", "problem": "wetchicken", "scale": "paper"})");
    CHECK(cfg.alpha.epochs == 5000);
    CHECK(cfg.data_n == 7500);
    CHECK(cfg.hmc.burn_in == 500000);
    CHECK(cfg.al.iterations == 150);
    CHECK(cfg.al.test_size == 2500);
    CHECK(cfg.decomposition.m_weights == 500);
    CHECK(cfg.policy_cfg.rollout.horizon == 100);
  }
  SUBCASE("field-path diagnostics") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"kind": "fly"})"),
                         "kind: unknown experiment kind 'fly'", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"kind": "train", "problem": "mars"})"),
                         "problem: must be hetero, bimodal or wetchicken", ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"kind": "train", "scale": "galactic"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"kind": "train", "model": {"hidden": "wide"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"kind": "train", "inference": {"alpha": 7}})"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  }
}

TEST_CASE("decompose run emits the grid CSV schema and a manifest") {
  fs::path out = fresh_dir("decompose");
  ExperimentConfig cfg = parse_config(tiny_decompose_config(out));
  std::ostringstream log;
  CHECK(run(cfg, log) == kExitOk);

  std::string csv = util::read_file(out / "uncertainty.csv");
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "x,entropy_total,entropy_aleatoric,mutual_information,var_total,var_epistemic,"
        "var_aleatoric,std_total");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 9);

  // Every artifact is referenced by the manifest.
  std::string manifest = util::read_file(out / "manifest.json");
  CHECK(manifest.find("uncertainty.csv") != std::string::npos);
  CHECK(manifest.find("checkpoint.json") != std::string::npos);
  CHECK(manifest.find("content_hash") != std::string::npos);
  for (const auto& entry : fs::directory_iterator(out)) {
    std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    CHECK(manifest.find(name) != std::string::npos);
  }
}

TEST_CASE("identical config and seed reproduce byte-identical artifacts") {
  fs::path out1 = fresh_dir("repeat1");
  fs::path out2 = fresh_dir("repeat2");
  std::ostringstream log;
  ExperimentConfig c1 = parse_config(tiny_decompose_config(out1));
  ExperimentConfig c2 = parse_config(tiny_decompose_config(out2));
  REQUIRE(run(c1, log) == kExitOk);
  REQUIRE(run(c2, log) == kExitOk);
  CHECK(util::read_file(out1 / "uncertainty.csv") == util::read_file(out2 / "uncertainty.csv"));
  CHECK(util::read_file(out1 / "trace.csv") == util::read_file(out2 / "trace.csv"));
  CHECK(util::read_file(out1 / "checkpoint.json") == util::read_file(out2 / "checkpoint.json"));
}

TEST_CASE("train then eval through a checkpoint") {
  fs::path out = fresh_dir("train");
  std::ostringstream ss;
  ss << R"({"kind": "train", "problem": "bimodal", "seed": 5, "out_dir": ")" << out.string()
     << R"(", "data": {"n": 60}, "model": {"hidden": [6]},
         "inference": {"epochs": 30, "minibatch": 30, "k_mc": 2}})";
  std::ostringstream log;
  ExperimentConfig cfg = parse_config(ss.str());
  REQUIRE(run(cfg, log) == kExitOk);
  CHECK(fs::exists(out / "checkpoint.json"));
  CHECK(fs::exists(out / "trace.csv"));

  fs::path eval_out = fresh_dir("eval");
  std::ostringstream es;
  es << R"({"kind": "eval", "problem": "bimodal", "seed": 6, "out_dir": ")" << eval_out.string()
     << R"(", "checkpoint": ")" << (out / "checkpoint.json").string()
     << R"(", "data": {"n": 60}, "eval_samples": 20,
         "active_learning": {"test_size": 50}})";
  ExperimentConfig eval_cfg = parse_config(es.str());
  REQUIRE(run(eval_cfg, log) == kExitOk);
  std::string csv = util::read_file(eval_out / "eval.csv");
  CHECK(csv.find("test_log_likelihood") != std::string::npos);
}

TEST_CASE("report aggregates learning curves into mean and standard error") {
  fs::path out = fresh_dir("report");
  util::write_file(out / "manifest.json", "{}");
  {
    util::CsvWriter curve(out / "learning_curve.csv",
                          {"method", "repetition", "iteration", "train_size", "test_log_likelihood"});
    const double finals[5] = {-1.7, -1.8, -1.9, -1.8, -1.8};
    for (int rep = 0; rep < 5; ++rep) {
      curve.row({"mutual_information", std::to_string(rep), "0", "750", "-2.5"});
      curve.row({"mutual_information", std::to_string(rep), "1", "755",
                 util::format_double(finals[rep])});
    }
    curve.row({"gp_entropy", "0", "1", "755", "-2.2"});
    curve.close();
  }
  std::ostringstream report_out;
  CHECK(report(out, report_out) == kExitOk);
  std::string table = util::read_file(out / "summary_table.csv");
  CHECK(table.find("mutual_information,-1.8,0.0316") != std::string::npos);
  // Single repetition: standard error column left empty.
  CHECK(table.find("gp_entropy,-2.2,,1") != std::string::npos);

  SUBCASE("report is idempotent") {
    std::ostringstream again;
    CHECK(report(out, again) == kExitOk);
    CHECK(util::read_file(out / "summary_table.csv") == table);
  }
  SUBCASE("empty directory errors") {
    fs::path empty = fresh_dir("empty");
    std::ostringstream sink;
    CHECK(report(empty, sink) == kExitFailure);
  }
}

TEST_CASE("cli binary end to end") {
  fs::path dir = fresh_dir("binary");
  fs::path config_path = dir / "config.json";
  util::write_file(config_path, tiny_decompose_config(dir / "run"));

  std::string base = std::string(BNNLV_CLI_PATH);
  CHECK(std::system((base + " decompose --config " + config_path.string() + " > /dev/null").c_str()) == 0);
  CHECK(fs::exists(dir / "run" / "uncertainty.csv"));

  // Unknown experiment kind surfaces the config-error exit code.
  util::write_file(config_path, R"({"kind": "warp"})");
  int rc = std::system((base + " train --config " + config_path.string() + " 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == kExitConfigError);

  // Invalid JSON too.
  util::write_file(config_path, "{broken");
  rc = std::system((base + " train --config " + config_path.string() + " 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == kExitConfigError);
}
