#include "bnnlv/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "bnnlv/checkpoint.hpp"
#include "bnnlv/util.hpp"

namespace bnnlv::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- JSON field access with path-carrying errors -------------------------

template <typename T>
T field_or(const json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path.empty() ? key : path + "." + key, "has the wrong type");
  }
}

const json* child(const json& j, const std::string& key) {
  if (!j.contains(key)) return nullptr;
  if (!j.at(key).is_object()) throw ConfigError(key, "must be an object");
  return &j.at(key);
}

// ---- presets --------------------------------------------------------------

struct Preset {
  int train_epochs;
  int minibatch_toy;
  int minibatch_wc;
  int data_toy;
  int data_wc;
  int data_wc_al;
  int al_iterations;
  int al_retrain_epochs;
  int decomp_m;
  int decomp_l;
  int hmc_burn_in;
  int hmc_kept;
  int policy_horizon;
  int policy_m;
  int policy_n;
  int policy_epochs;
};

Preset preset_for(const std::string& scale) {
  if (scale == "desk") {
    return Preset{2000, 75, 250, 750, 7500, 2500, 30, 500, 200, 200, 20000, 20000, 30, 20, 10, 300};
  }
  if (scale == "paper") {
    return Preset{5000, 75, 250, 750, 7500, 7500, 150, 5000, 500, 500, 500000, 200000, 100, 50, 25, 750};
  }
  throw ConfigError("scale", "must be 'desk' or 'paper'");
}

bool is_wetchicken(const ExperimentConfig& cfg) { return cfg.problem == "wetchicken"; }

void apply_preset(ExperimentConfig& cfg) {
  Preset p = preset_for(cfg.scale);
  bool wc = is_wetchicken(cfg);
  if (cfg.alpha.epochs == 0) cfg.alpha.epochs = p.train_epochs;
  if (cfg.alpha.minibatch == 0) cfg.alpha.minibatch = wc ? p.minibatch_wc : p.minibatch_toy;
  if (cfg.data_n == 0) cfg.data_n = wc ? p.data_wc : p.data_toy;
  if (cfg.hmc.burn_in == 0) cfg.hmc.burn_in = p.hmc_burn_in;
  if (cfg.hmc.kept == 0) cfg.hmc.kept = p.hmc_kept;
  if (cfg.decomposition.m_weights == 0) cfg.decomposition.m_weights = p.decomp_m;
  if (cfg.decomposition.l_noise == 0) cfg.decomposition.l_noise = p.decomp_l;

  if (cfg.al.iterations == 0) cfg.al.iterations = p.al_iterations;
  if (cfg.al.test_size == 0) cfg.al.test_size = wc ? 2500 : 500;
  if (cfg.al.initial_data == 0) cfg.al.initial_data = wc ? p.data_wc_al : p.data_toy;
  if (cfg.al.train.epochs == 0) cfg.al.train.epochs = p.al_retrain_epochs;
  if (cfg.al.train.minibatch == 0) cfg.al.train.minibatch = wc ? p.minibatch_wc : p.minibatch_toy;
  if (cfg.al.decomposition.m_weights == 0) cfg.al.decomposition.m_weights = p.decomp_m;
  if (cfg.al.decomposition.l_noise == 0) cfg.al.decomposition.l_noise = p.decomp_l;
  cfg.al.workers = cfg.workers;

  if (cfg.policy_cfg.rollout.horizon == 0) cfg.policy_cfg.rollout.horizon = p.policy_horizon;
  if (cfg.policy_cfg.rollout.m_weights == 0) cfg.policy_cfg.rollout.m_weights = p.policy_m;
  if (cfg.policy_cfg.rollout.n_inner == 0) cfg.policy_cfg.rollout.n_inner = p.policy_n;
  if (cfg.policy_cfg.epochs == 0) cfg.policy_cfg.epochs = p.policy_epochs;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = cfg.kind;
  j["problem"] = cfg.problem;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["scale"] = cfg.scale;
  j["workers"] = cfg.workers;
  j["checkpoint"] = cfg.checkpoint;
  j["model"] = {{"hidden", cfg.hidden},
                {"gamma_z", cfg.gamma_z},
                {"lambda_w", cfg.lambda_w},
                {"noise_variance", cfg.noise_init}};
  j["data"] = {{"n", cfg.data_n}};
  j["inference"] = {{"method", cfg.inference},
                    {"alpha", cfg.alpha.alpha},
                    {"epochs", cfg.alpha.epochs},
                    {"learning_rate", cfg.alpha.learning_rate},
                    {"k_mc", cfg.alpha.k_mc},
                    {"minibatch", cfg.alpha.minibatch}};
  j["hmc"] = {{"burn_in", cfg.hmc.burn_in},
              {"kept", cfg.hmc.kept},
              {"thin", cfg.hmc.thin},
              {"leapfrog_steps", cfg.hmc.leapfrog_steps},
              {"step_size", cfg.hmc.step_size},
              {"target_acceptance", cfg.hmc.target_acceptance}};
  j["decomposition"] = {{"k", cfg.decomposition.k},
                        {"m_weights", cfg.decomposition.m_weights},
                        {"l_noise", cfg.decomposition.l_noise}};
  j["grid"] = {{"points", cfg.grid_points}, {"points_2d", cfg.grid_points_2d}};
  j["active_learning"] = {{"iterations", cfg.al.iterations},
                          {"pool_size", cfg.al.pool_size},
                          {"batch_size", cfg.al.batch_size},
                          {"test_size", cfg.al.test_size},
                          {"repetitions", cfg.al.repetitions},
                          {"initial_data", cfg.al.initial_data},
                          {"retrain_epochs", cfg.al.train.epochs},
                          {"learning_rate", cfg.al.train.learning_rate},
                          {"k_mc", cfg.al.train.k_mc},
                          {"minibatch", cfg.al.train.minibatch},
                          {"decomposition_k", cfg.al.decomposition.k},
                          {"decomposition_m", cfg.al.decomposition.m_weights},
                          {"decomposition_l", cfg.al.decomposition.l_noise},
                          {"eval_samples", cfg.al.eval_samples},
                          {"gp_max_train", cfg.al.gp_max_train},
                          {"methods", cfg.al_methods}};
  json grid = json::array();
  for (const auto& [beta, gamma] : cfg.risk_grid) grid.push_back({beta, gamma});
  j["policy"] = {{"horizon", cfg.policy_cfg.rollout.horizon},
                 {"m_weights", cfg.policy_cfg.rollout.m_weights},
                 {"n_inner", cfg.policy_cfg.rollout.n_inner},
                 {"epochs", cfg.policy_cfg.epochs},
                 {"learning_rate", cfg.policy_cfg.learning_rate},
                 {"risk_grid", grid},
                 {"seeds", cfg.policy_seeds},
                 {"eval_rollouts", cfg.eval_rollouts},
                 {"model_rollouts", cfg.model_rollouts},
                 {"eval_starts", cfg.eval_starts}};
  j["eval_samples"] = cfg.eval_samples;
  return j;
}

// ---- manifest -------------------------------------------------------------

struct Manifest {
  json resolved_config;
  std::vector<std::string> artifacts;
  std::string input_hash;

  void write(const fs::path& dir) const {
    json j;
    j["resolved_config"] = resolved_config;
    j["seed"] = resolved_config.at("seed");
    j["content_hash"] = input_hash;
    j["artifacts"] = artifacts;
    util::write_file(dir / "manifest.json", j.dump(1));
  }
};

Manifest make_manifest(const ExperimentConfig& cfg) {
  Manifest m;
  m.resolved_config = to_json(cfg);
  std::string blob = m.resolved_config.dump();
  if (!cfg.checkpoint.empty()) blob += util::read_file(cfg.checkpoint);
  m.input_hash = util::sha1_hex(blob);
  return m;
}

// ---- shared helpers --------------------------------------------------------

Dataset make_problem_data(const ExperimentConfig& cfg, RngStream& rng) {
  return al::sample_initial_data(al::problem_from_name(cfg.problem), cfg.data_n, rng);
}

BnnLvModel make_model(const ExperimentConfig& cfg) {
  al::Problem p = al::problem_from_name(cfg.problem);
  return BnnLvModel::make(al::problem_input_dim(p), cfg.hidden, al::problem_target_dim(p),
                          cfg.gamma_z, cfg.lambda_w, cfg.noise_init);
}

// Trains with the configured backend; writes trace.csv; returns a checkpoint.
Checkpoint train_checkpoint(const ExperimentConfig& cfg, const Dataset& data, RngStream& rng,
                            const fs::path& dir, Manifest& manifest) {
  BnnLvModel model = make_model(cfg);
  if (cfg.inference == "hmc") {
    inference::HmcResult diag;
    PosteriorEnsemble ens = inference::hmc_sample(model, data, cfg.hmc, rng, &diag);
    util::CsvWriter trace(dir / "trace.csv", {"iteration", "acceptance_rate"});
    for (const auto& [iter, acc] : diag.trace) {
      trace.row({std::to_string(iter), util::format_double(acc)});
    }
    trace.close();
    manifest.artifacts.push_back("trace.csv");
    return Checkpoint{std::move(model), std::nullopt, std::move(ens),
                      "hmc acceptance=" + util::format_double(diag.acceptance_rate)};
  }
  inference::AlphaTrainResult res = inference::train_alpha(model, data, cfg.alpha, rng);
  util::CsvWriter trace(dir / "trace.csv", {"epoch", "energy"});
  for (std::size_t e = 0; e < res.energy_trace.size(); ++e) {
    trace.row({std::to_string(e), util::format_double(res.energy_trace[e])});
  }
  trace.close();
  manifest.artifacts.push_back("trace.csv");
  model.noise_variance = res.posterior.noise_log_variance.array().exp();
  return Checkpoint{std::move(model), std::move(res.posterior), std::nullopt, "alpha"};
}

// ---- kinds -----------------------------------------------------------------

int run_train(const ExperimentConfig& cfg, std::ostream& log) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  Manifest manifest = make_manifest(cfg);
  RngStream rng(cfg.seed, 0x7A);
  Dataset data = make_problem_data(cfg, rng);
  RngStream train_rng = rng.derive(1);
  Checkpoint ckpt = train_checkpoint(cfg, data, train_rng, dir, manifest);
  save_checkpoint(ckpt, dir / "checkpoint.json");
  manifest.artifacts.push_back("checkpoint.json");
  manifest.write(dir);
  log << "trained " << cfg.problem << " with " << cfg.inference << " (" << data.size()
      << " points)\n";
  return kExitOk;
}

int run_decompose(const ExperimentConfig& cfg, std::ostream& log) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  Manifest manifest = make_manifest(cfg);
  RngStream rng(cfg.seed, 0xDE);

  std::optional<Checkpoint> ckpt;
  if (!cfg.checkpoint.empty()) {
    ckpt = load_checkpoint(cfg.checkpoint);
  } else {
    Dataset data = make_problem_data(cfg, rng);
    RngStream train_rng = rng.derive(1);
    ckpt = train_checkpoint(cfg, data, train_rng, dir, manifest);
    save_checkpoint(*ckpt, dir / "checkpoint.json");
    manifest.artifacts.push_back("checkpoint.json");
  }
  RngStream ens_rng = rng.derive(2);
  PosteriorEnsemble ensemble = ckpt->prediction_ensemble(cfg.decomposition.m_weights, ens_rng);

  al::Problem problem = al::problem_from_name(cfg.problem);
  std::vector<Eigen::VectorXd> queries;
  std::vector<std::vector<double>> coords;
  if (problem == al::Problem::wetchicken) {
    int g = cfg.grid_points_2d;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        double x = 5.0 * i / (g - 1);
        double y = 5.0 * j / (g - 1);
        Eigen::VectorXd q(4);
        q << x, y, 0.0, 0.0;  // held action (0, 0)
        queries.push_back(q);
        coords.push_back({x, y});
      }
    }
  } else {
    double lo = problem == al::Problem::hetero ? -6.0 : -0.5;
    double hi = problem == al::Problem::hetero ? 6.0 : 2.0;
    for (int i = 0; i < cfg.grid_points; ++i) {
      double x = lo + (hi - lo) * i / (cfg.grid_points - 1);
      Eigen::VectorXd q(1);
      q << x;
      queries.push_back(q);
      coords.push_back({x});
    }
  }

  std::vector<uncertainty::UncertaintyReport> reports(queries.size());
  RngStream grid_rng = rng.derive(3);
  util::parallel_for(static_cast<int>(queries.size()), cfg.workers, [&](int i) {
    RngStream point_rng = grid_rng.derive(static_cast<std::uint64_t>(i));
    reports[static_cast<std::size_t>(i)] = uncertainty::decompose(
        ckpt->model, ensemble, queries[static_cast<std::size_t>(i)], cfg.decomposition, point_rng);
  });

  std::vector<std::string> columns;
  if (problem == al::Problem::wetchicken) {
    columns = {"x", "y"};
  } else {
    columns = {"x"};
  }
  for (const char* c : {"entropy_total", "entropy_aleatoric", "mutual_information", "var_total",
                        "var_epistemic", "var_aleatoric", "std_total"}) {
    columns.push_back(c);
  }
  util::CsvWriter csv(dir / "uncertainty.csv", columns);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& r = reports[i];
    std::vector<double> row = coords[i];
    row.insert(row.end(), {r.entropy_total, r.entropy_aleatoric, r.mutual_information,
                           r.var_total.sum(), r.var_epistemic.sum(), r.var_aleatoric.sum(),
                           r.std_total});
    csv.row_values(row);
  }
  csv.close();
  manifest.artifacts.push_back("uncertainty.csv");
  manifest.write(dir);
  log << "decomposed " << queries.size() << " grid points\n";
  return kExitOk;
}

int run_active_learn(const ExperimentConfig& cfg, std::ostream& log) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  Manifest manifest = make_manifest(cfg);
  al::Problem problem = al::problem_from_name(cfg.problem);

  util::CsvWriter curve(dir / "learning_curve.csv",
                        {"method", "repetition", "iteration", "train_size", "test_log_likelihood"});
  util::CsvWriter summary(dir / "summary.csv",
                          {"method", "final_mean", "final_stderr", "repetitions_used"});
  bool partial = false;
  for (const std::string& name : cfg.al_methods) {
    al::AcquisitionMethod method = al::method_from_name(name);
    al::AlCurve result = al::run_al_experiment(method, problem, cfg.al, cfg.seed);
    for (const auto& rec : result.records) {
      if (std::find(result.failed_repetitions.begin(), result.failed_repetitions.end(),
                    rec.repetition) != result.failed_repetitions.end()) {
        continue;
      }
      curve.row({name, std::to_string(rec.repetition), std::to_string(rec.iteration),
                 std::to_string(rec.train_size), util::format_double(rec.test_log_likelihood)});
    }
    std::vector<double> finals = result.final_values();
    if (!result.failed_repetitions.empty()) {
      partial = true;
      log << "method " << name << ": " << result.failed_repetitions.size()
          << " repetition(s) failed\n";
    }
    double se = util::stderr_of(finals);
    summary.row({name, finals.empty() ? "" : util::format_double(util::mean_of(finals)),
                 std::isnan(se) ? "" : util::format_double(se), std::to_string(finals.size())});
    log << "method " << name << " final test LL mean "
        << (finals.empty() ? std::string("n/a") : util::format_double(util::mean_of(finals)))
        << "\n";
  }
  curve.close();
  summary.close();
  manifest.artifacts.push_back("learning_curve.csv");
  manifest.artifacts.push_back("summary.csv");
  manifest.write(dir);
  return partial ? kExitPartialFailure : kExitOk;
}

int run_policy_search(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.problem != "wetchicken") {
    throw ConfigError("problem", "policy-search supports the wetchicken problem");
  }
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  Manifest manifest = make_manifest(cfg);
  envs::WetChickenParams params;

  util::CsvWriter tradeoff(dir / "tradeoff.csv", {"beta", "gamma_risk", "seed",
                                                  "ground_truth_cost", "model_cost", "model_bias"});
  util::CsvWriter trace(dir / "policy_trace.csv", {"beta", "gamma_risk", "seed", "epoch", "objective"});

  struct Task {
    double beta, gamma;
    int seed_index;
  };
  std::vector<Task> tasks;
  for (const auto& [beta, gamma] : cfg.risk_grid) {
    for (int s = 0; s < cfg.policy_seeds; ++s) tasks.push_back(Task{beta, gamma, s});
  }
  struct Row {
    double beta, gamma;
    int seed_index;
    double gt_cost, model_cost, bias;
    std::vector<double> trace;
  };
  std::vector<Row> rows(tasks.size());

  // One model per seed, shared across risk settings.
  std::vector<std::optional<std::pair<BnnLvModel, PosteriorEnsemble>>> models(
      static_cast<std::size_t>(cfg.policy_seeds));
  std::vector<std::vector<envs::WcState>> starts_per_seed(static_cast<std::size_t>(cfg.policy_seeds));
  std::vector<Dataset> data_per_seed(static_cast<std::size_t>(cfg.policy_seeds));
  for (int s = 0; s < cfg.policy_seeds; ++s) {
    RngStream rng(cfg.seed, 0xB0 + static_cast<std::uint64_t>(s));
    RngStream data_rng = rng.derive(1);
    Dataset data = al::sample_initial_data(al::Problem::wetchicken, cfg.data_n, data_rng);
    BnnLvModel model = make_model(cfg);
    RngStream train_rng = rng.derive(2);
    inference::AlphaTrainResult fit = inference::train_alpha(model, data, cfg.alpha, train_rng);
    model.noise_variance = fit.posterior.noise_log_variance.array().exp();
    RngStream ens_rng = rng.derive(3);
    PosteriorEnsemble ens =
        posterior_to_ensemble(model, fit.posterior, cfg.policy_cfg.rollout.m_weights * 10, ens_rng);
    // Fixed evaluation start states, shared by every (beta, gamma) setting.
    RngStream start_rng = rng.derive(4);
    std::vector<envs::WcState> starts;
    for (int i = 0; i < cfg.eval_starts; ++i) {
      int idx = start_rng.uniform_int(data.size());
      starts.push_back(envs::WcState{data.x(idx, 0), data.x(idx, 1)});
    }
    models[static_cast<std::size_t>(s)] = {std::move(model), std::move(ens)};
    starts_per_seed[static_cast<std::size_t>(s)] = std::move(starts);
    data_per_seed[static_cast<std::size_t>(s)] = std::move(data);
  }

  util::parallel_for(static_cast<int>(tasks.size()), cfg.workers, [&](int ti) {
    const Task& task = tasks[static_cast<std::size_t>(ti)];
    auto& [model, ens] = *models[static_cast<std::size_t>(task.seed_index)];
    const Dataset& data = data_per_seed[static_cast<std::size_t>(task.seed_index)];
    std::vector<envs::WcState> batch_states;
    for (int i = 0; i < data.size(); ++i) {
      batch_states.push_back(envs::WcState{data.x(i, 0), data.x(i, 1)});
    }
    policy::PolicyTrainConfig pc = cfg.policy_cfg;
    pc.risk = policy::RiskConfig{task.beta, task.gamma};
    RngStream rng(cfg.seed, 0xC000 + 97 * static_cast<std::uint64_t>(ti));
    policy::PolicyTrainResult trained = policy::train_policy(model, ens, batch_states, pc, rng);

    RngStream eval_rng = rng.derive(7);
    policy::ModelBiasReport bias = policy::model_bias(
        trained.policy, model, ens, params, starts_per_seed[static_cast<std::size_t>(task.seed_index)],
        pc.rollout.horizon, cfg.eval_rollouts, cfg.model_rollouts, eval_rng);
    double gt_cost = bias.ground_truth_cost;

    // Expected cost under the model with the same rollout machinery.
    RngStream mc_rng = rng.derive(8);
    double model_cost = 0.0;
    {
      const auto& starts = starts_per_seed[static_cast<std::size_t>(task.seed_index)];
      double acc = 0.0;
      for (const auto& s0 : starts) {
        for (int r = 0; r < cfg.model_rollouts; ++r) {
          int wi = mc_rng.uniform_int(ens.size());
          policy::RolloutDraws draws;
          draws.z.resize(1, pc.rollout.horizon);
          draws.eps.resize(2, pc.rollout.horizon);
          const Eigen::VectorXd sd =
              ens.noise_for(model, wi).cwiseMax(1e-12).cwiseSqrt();
          for (int t = 0; t < pc.rollout.horizon; ++t) {
            draws.z(0, t) = std::sqrt(model.gamma_z) * mc_rng.normal();
            draws.eps(0, t) = sd[0] * mc_rng.normal();
            draws.eps(1, t) = sd[1] * mc_rng.normal();
          }
          auto costs = policy::model_rollout(model, ens.weight_samples[static_cast<std::size_t>(wi)],
                                             trained.policy, s0, draws, pc.rollout.horizon);
          for (double c : costs) acc += c;
        }
      }
      model_cost = acc / (static_cast<double>(starts.size()) * cfg.model_rollouts);
    }
    rows[static_cast<std::size_t>(ti)] =
        Row{task.beta, task.gamma, task.seed_index, gt_cost, model_cost, bias.mean_bias,
            trained.objective_trace};
  });

  for (const Row& row : rows) {
    tradeoff.row_values({row.beta, row.gamma, static_cast<double>(row.seed_index), row.gt_cost,
                         row.model_cost, row.bias});
    for (std::size_t e = 0; e < row.trace.size(); ++e) {
      trace.row({util::format_double(row.beta), util::format_double(row.gamma),
                 std::to_string(row.seed_index), std::to_string(e),
                 util::format_double(row.trace[e])});
    }
  }
  tradeoff.close();
  trace.close();
  manifest.artifacts.push_back("tradeoff.csv");
  manifest.artifacts.push_back("policy_trace.csv");
  manifest.write(dir);
  log << "policy search over " << cfg.risk_grid.size() << " risk settings x " << cfg.policy_seeds
      << " seeds\n";
  return kExitOk;
}

int run_eval(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint", "eval needs a checkpoint path");
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  Manifest manifest = make_manifest(cfg);
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  RngStream rng(cfg.seed, 0xE7);
  RngStream ens_rng = rng.derive(1);
  PosteriorEnsemble ens = ckpt.prediction_ensemble(cfg.decomposition.m_weights, ens_rng);
  al::Problem problem = al::problem_from_name(cfg.problem);
  RngStream test_rng = rng.derive(2);
  Dataset test = al::sample_test_set(problem, cfg.al.test_size > 0 ? cfg.al.test_size : 500, test_rng);
  RngStream ll_rng = rng.derive(3);
  double ll = test_log_likelihood(ckpt.model, ens, test, cfg.eval_samples, ll_rng);
  util::CsvWriter csv(dir / "eval.csv", {"metric", "value"});
  csv.row({"test_log_likelihood", util::format_double(ll)});
  csv.row({"test_size", std::to_string(test.size())});
  csv.close();
  manifest.artifacts.push_back("eval.csv");
  manifest.write(dir);
  log << "test log-likelihood " << ll << "\n";
  return kExitOk;
}

// ---- report ----------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::string text = util::read_file(path);
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

void ExperimentConfig::validate() const {
  static const std::vector<std::string> kinds = {"train", "decompose", "active-learn",
                                                 "policy-search", "eval"};
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw ConfigError("kind", "unknown experiment kind '" + kind + "'");
  }
  if (problem != "hetero" && problem != "bimodal" && problem != "wetchicken") {
    throw ConfigError("problem", "must be hetero, bimodal or wetchicken");
  }
  if (scale != "desk" && scale != "paper") throw ConfigError("scale", "must be desk or paper");
  if (workers < 1) throw ConfigError("workers", "must be >= 1");
  if (inference != "alpha" && inference != "hmc") {
    throw ConfigError("inference.method", "must be alpha or hmc");
  }
  if (!checkpoint.empty() && !fs::exists(checkpoint)) {
    throw ConfigError("checkpoint", "file does not exist: " + checkpoint);
  }
  if (hidden.empty()) throw ConfigError("model.hidden", "need at least one hidden layer");
  if (gamma_z <= 0.0) throw ConfigError("model.gamma_z", "must be positive");
  if (lambda_w <= 0.0) throw ConfigError("model.lambda_w", "must be positive");
  if (noise_init <= 0.0) throw ConfigError("model.noise_variance", "must be positive");
  if (data_n < 1) throw ConfigError("data.n", "must be >= 1");
  try {
    alpha.validate();
  } catch (const std::exception& e) {
    throw ConfigError("inference", e.what());
  }
  try {
    if (kind == "train" || kind == "decompose") {
      if (inference == "hmc") hmc.validate();
    }
    decomposition.validate();
    if (kind == "active-learn") al.validate();
    if (kind == "policy-search") {
      policy_cfg.rollout.validate();
      if (policy_seeds < 1) throw std::invalid_argument("seeds must be >= 1");
      if (risk_grid.empty()) throw std::invalid_argument("risk_grid must be non-empty");
      for (const auto& [b, g] : risk_grid) policy::RiskConfig{b, g}.validate();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(kind, e.what());
  }
  for (const auto& m : al_methods) al::method_from_name(m);
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  int version = field_or<int>(j, "", "schema_version", 1);
  if (version != 1) throw ConfigError("schema_version", "unsupported version");

  ExperimentConfig cfg;
  cfg.kind = field_or<std::string>(j, "", "kind", "");
  cfg.problem = field_or<std::string>(j, "", "problem", cfg.problem);
  cfg.seed = field_or<std::uint64_t>(j, "", "seed", cfg.seed);
  cfg.out_dir = field_or<std::string>(j, "", "out_dir", cfg.out_dir);
  cfg.scale = field_or<std::string>(j, "", "scale", cfg.scale);
  cfg.workers = field_or<int>(j, "", "workers", cfg.workers);
  cfg.checkpoint = field_or<std::string>(j, "", "checkpoint", cfg.checkpoint);
  cfg.eval_samples = field_or<int>(j, "", "eval_samples", cfg.eval_samples);

  if (const json* m = child(j, "model")) {
    cfg.hidden = field_or<std::vector<int>>(*m, "model", "hidden", cfg.hidden);
    cfg.gamma_z = field_or<double>(*m, "model", "gamma_z", cfg.gamma_z);
    cfg.lambda_w = field_or<double>(*m, "model", "lambda_w", cfg.lambda_w);
    cfg.noise_init = field_or<double>(*m, "model", "noise_variance", cfg.noise_init);
  }
  if (const json* d = child(j, "data")) {
    cfg.data_n = field_or<int>(*d, "data", "n", cfg.data_n);
  }
  if (const json* i = child(j, "inference")) {
    cfg.inference = field_or<std::string>(*i, "inference", "method", cfg.inference);
    cfg.alpha.alpha = field_or<double>(*i, "inference", "alpha", cfg.alpha.alpha);
    cfg.alpha.epochs = field_or<int>(*i, "inference", "epochs", 0);
    cfg.alpha.learning_rate = field_or<double>(*i, "inference", "learning_rate", cfg.alpha.learning_rate);
    cfg.alpha.k_mc = field_or<int>(*i, "inference", "k_mc", cfg.alpha.k_mc);
    cfg.alpha.minibatch = field_or<int>(*i, "inference", "minibatch", 0);
  } else {
    cfg.alpha.epochs = 0;
    cfg.alpha.minibatch = 0;
  }
  if (const json* h = child(j, "hmc")) {
    cfg.hmc.burn_in = field_or<int>(*h, "hmc", "burn_in", 0);
    cfg.hmc.kept = field_or<int>(*h, "hmc", "kept", 0);
    cfg.hmc.thin = field_or<int>(*h, "hmc", "thin", cfg.hmc.thin);
    cfg.hmc.leapfrog_steps = field_or<int>(*h, "hmc", "leapfrog_steps", cfg.hmc.leapfrog_steps);
    cfg.hmc.step_size = field_or<double>(*h, "hmc", "step_size", 0.0);
    cfg.hmc.target_acceptance = field_or<double>(*h, "hmc", "target_acceptance", cfg.hmc.target_acceptance);
  } else {
    cfg.hmc.burn_in = 0;
    cfg.hmc.kept = 0;
  }
  if (const json* d = child(j, "decomposition")) {
    cfg.decomposition.k = field_or<int>(*d, "decomposition", "k", cfg.decomposition.k);
    cfg.decomposition.m_weights = field_or<int>(*d, "decomposition", "m_weights", 0);
    cfg.decomposition.l_noise = field_or<int>(*d, "decomposition", "l_noise", 0);
  } else {
    cfg.decomposition.m_weights = 0;
    cfg.decomposition.l_noise = 0;
  }
  if (const json* g = child(j, "grid")) {
    cfg.grid_points = field_or<int>(*g, "grid", "points", cfg.grid_points);
    cfg.grid_points_2d = field_or<int>(*g, "grid", "points_2d", cfg.grid_points_2d);
  }
  // Active-learning block; zeros defer to the preset.
  cfg.al.iterations = 0;
  cfg.al.test_size = 0;
  cfg.al.initial_data = 0;
  cfg.al.train.epochs = 0;
  cfg.al.train.minibatch = 0;
  cfg.al.decomposition.m_weights = 0;
  cfg.al.decomposition.l_noise = 0;
  if (const json* a = child(j, "active_learning")) {
    cfg.al.iterations = field_or<int>(*a, "active_learning", "iterations", 0);
    cfg.al.pool_size = field_or<int>(*a, "active_learning", "pool_size", cfg.al.pool_size);
    cfg.al.batch_size = field_or<int>(*a, "active_learning", "batch_size", cfg.al.batch_size);
    cfg.al.test_size = field_or<int>(*a, "active_learning", "test_size", 0);
    cfg.al.repetitions = field_or<int>(*a, "active_learning", "repetitions", cfg.al.repetitions);
    cfg.al.initial_data = field_or<int>(*a, "active_learning", "initial_data", 0);
    cfg.al.train.epochs = field_or<int>(*a, "active_learning", "retrain_epochs", 0);
    cfg.al.train.learning_rate =
        field_or<double>(*a, "active_learning", "learning_rate", cfg.al.train.learning_rate);
    cfg.al.train.k_mc = field_or<int>(*a, "active_learning", "k_mc", cfg.al.train.k_mc);
    cfg.al.train.minibatch = field_or<int>(*a, "active_learning", "minibatch", 0);
    cfg.al.decomposition.k = field_or<int>(*a, "active_learning", "decomposition_k", cfg.al.decomposition.k);
    cfg.al.decomposition.m_weights = field_or<int>(*a, "active_learning", "decomposition_m", 0);
    cfg.al.decomposition.l_noise = field_or<int>(*a, "active_learning", "decomposition_l", 0);
    cfg.al.eval_samples = field_or<int>(*a, "active_learning", "eval_samples", cfg.al.eval_samples);
    cfg.al.gp_max_train = field_or<int>(*a, "active_learning", "gp_max_train", cfg.al.gp_max_train);
    cfg.al_methods = field_or<std::vector<std::string>>(*a, "active_learning", "methods", cfg.al_methods);
  }
  if (const json* p = child(j, "policy")) {
    cfg.policy_cfg.rollout.horizon = field_or<int>(*p, "policy", "horizon", 0);
    cfg.policy_cfg.rollout.m_weights = field_or<int>(*p, "policy", "m_weights", 0);
    cfg.policy_cfg.rollout.n_inner = field_or<int>(*p, "policy", "n_inner", 0);
    cfg.policy_cfg.epochs = field_or<int>(*p, "policy", "epochs", 0);
    cfg.policy_cfg.learning_rate = field_or<double>(*p, "policy", "learning_rate", cfg.policy_cfg.learning_rate);
    cfg.policy_seeds = field_or<int>(*p, "policy", "seeds", cfg.policy_seeds);
    cfg.eval_rollouts = field_or<int>(*p, "policy", "eval_rollouts", cfg.eval_rollouts);
    cfg.model_rollouts = field_or<int>(*p, "policy", "model_rollouts", cfg.model_rollouts);
    cfg.eval_starts = field_or<int>(*p, "policy", "eval_starts", cfg.eval_starts);
    if (p->contains("risk_grid")) {
      cfg.risk_grid.clear();
      const json& grid = p->at("risk_grid");
      if (!grid.is_array()) throw ConfigError("policy.risk_grid", "must be an array of [beta, gamma] pairs");
      for (const auto& entry : grid) {
        if (!entry.is_array() || entry.size() != 2) {
          throw ConfigError("policy.risk_grid", "entries must be [beta, gamma] pairs");
        }
        cfg.risk_grid.emplace_back(entry[0].get<double>(), entry[1].get<double>());
      }
    }
  } else {
    cfg.policy_cfg.rollout.horizon = 0;
    cfg.policy_cfg.rollout.m_weights = 0;
    cfg.policy_cfg.rollout.n_inner = 0;
    cfg.policy_cfg.epochs = 0;
  }

  apply_preset(cfg);
  cfg.validate();
  return cfg;
}

int run(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.kind == "train") return run_train(cfg, log);
  if (cfg.kind == "decompose") return run_decompose(cfg, log);
  if (cfg.kind == "active-learn") return run_active_learn(cfg, log);
  if (cfg.kind == "policy-search") return run_policy_search(cfg, log);
  if (cfg.kind == "eval") return run_eval(cfg, log);
  throw ConfigError("kind", "unknown experiment kind '" + cfg.kind + "'");
}

int report(const fs::path& run_dir, std::ostream& out) {
  if (!fs::exists(run_dir / "manifest.json")) {
    out << "error: no manifest in " << run_dir.string() << "\n";
    return kExitFailure;
  }
  bool wrote_any = false;
  if (fs::exists(run_dir / "learning_curve.csv")) {
    auto rows = read_csv(run_dir / "learning_curve.csv");
    // method -> repetition -> (iteration, value); summarize the final iteration.
    std::map<std::string, std::map<int, std::pair<int, double>>> finals;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 5) continue;
      int rep = std::stoi(r[1]);
      int iter = std::stoi(r[2]);
      double value = std::stod(r[4]);
      auto& slot = finals[r[0]][rep];
      if (iter >= slot.first) slot = {iter, value};
    }
    util::CsvWriter table(run_dir / "summary_table.csv",
                          {"method", "mean", "stderr", "repetitions"});
    out << "final test log-likelihood (mean +/- stderr)\n";
    for (const auto& [method, reps] : finals) {
      std::vector<double> values;
      for (const auto& [rep, iv] : reps) values.push_back(iv.second);
      double mean = util::mean_of(values);
      double se = util::stderr_of(values);
      table.row({method, util::format_double(mean), std::isnan(se) ? "" : util::format_double(se),
                 std::to_string(values.size())});
      out << "  " << method << ": " << mean;
      if (!std::isnan(se)) out << " +/- " << se;
      out << " (" << values.size() << " reps)\n";
    }
    table.close();
    wrote_any = true;
  }
  if (fs::exists(run_dir / "tradeoff.csv")) {
    auto rows = read_csv(run_dir / "tradeoff.csv");
    std::map<std::pair<double, double>, std::vector<std::array<double, 3>>> groups;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 6) continue;
      groups[{std::stod(r[0]), std::stod(r[1])}].push_back(
          {std::stod(r[3]), std::stod(r[4]), std::stod(r[5])});
    }
    util::CsvWriter table(run_dir / "tradeoff_table.csv",
                          {"beta", "gamma_risk", "seeds", "ground_truth_cost_mean",
                           "model_cost_mean", "model_bias_mean"});
    out << "cost vs model-bias trade-off\n";
    for (const auto& [key, entries] : groups) {
      double gt = 0, mc = 0, mb = 0;
      for (const auto& e : entries) {
        gt += e[0];
        mc += e[1];
        mb += e[2];
      }
      double n = static_cast<double>(entries.size());
      table.row_values({key.first, key.second, n, gt / n, mc / n, mb / n});
      out << "  beta=" << key.first << " gamma=" << key.second << ": cost " << gt / n
          << ", bias " << mb / n << "\n";
    }
    table.close();
    wrote_any = true;
  }
  if (!wrote_any) {
    out << "nothing to aggregate in " << run_dir.string() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace bnnlv::cli
