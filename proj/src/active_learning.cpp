#include "bnnlv/active_learning.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "bnnlv/util.hpp"

namespace bnnlv::al {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string method_name(AcquisitionMethod m) {
  switch (m) {
    case AcquisitionMethod::mutual_information: return "mutual_information";
    case AcquisitionMethod::total_entropy: return "total_entropy";
    case AcquisitionMethod::gp_entropy: return "gp_entropy";
  }
  throw std::logic_error("unknown method");
}

std::string problem_name(Problem p) {
  switch (p) {
    case Problem::hetero: return "hetero";
    case Problem::bimodal: return "bimodal";
    case Problem::wetchicken: return "wetchicken";
  }
  throw std::logic_error("unknown problem");
}

AcquisitionMethod method_from_name(const std::string& name) {
  if (name == "mutual_information") return AcquisitionMethod::mutual_information;
  if (name == "total_entropy") return AcquisitionMethod::total_entropy;
  if (name == "gp_entropy") return AcquisitionMethod::gp_entropy;
  throw std::invalid_argument("unknown acquisition method: " + name);
}

Problem problem_from_name(const std::string& name) {
  if (name == "hetero") return Problem::hetero;
  if (name == "bimodal") return Problem::bimodal;
  if (name == "wetchicken") return Problem::wetchicken;
  throw std::invalid_argument("unknown problem: " + name);
}

int problem_input_dim(Problem p) { return p == Problem::wetchicken ? 4 : 1; }
int problem_target_dim(Problem p) { return p == Problem::wetchicken ? 2 : 1; }

MatrixXd sample_pool_inputs(Problem p, int n, RngStream& rng) {
  MatrixXd x(n, problem_input_dim(p));
  for (int i = 0; i < n; ++i) {
    switch (p) {
      case Problem::hetero:
        x(i, 0) = rng.uniform(-6.0, 6.0);
        break;
      case Problem::bimodal:
        x(i, 0) = rng.uniform(-0.5, 2.0);
        break;
      case Problem::wetchicken:
        x(i, 0) = rng.uniform(0.0, 5.0);
        x(i, 1) = rng.uniform(0.0, 5.0);
        x(i, 2) = rng.uniform(-1.0, 1.0);
        x(i, 3) = rng.uniform(-1.0, 1.0);
        break;
    }
  }
  return x;
}

VectorXd label_input(Problem p, const VectorXd& x, RngStream& rng) {
  VectorXd y(problem_target_dim(p));
  switch (p) {
    case Problem::hetero:
      y[0] = envs::hetero_label(x[0], rng);
      break;
    case Problem::bimodal:
      y[0] = envs::bimodal_label(x[0], rng);
      break;
    case Problem::wetchicken: {
      envs::WetChickenParams params;
      auto next = envs::wetchicken_step(params, envs::WcState{x[0], x[1]},
                                        envs::WcAction{x[2], x[3]}, rng.uniform(-1.0, 1.0));
      y[0] = next.next.x;
      y[1] = next.next.y;
      break;
    }
  }
  return y;
}

Dataset sample_initial_data(Problem p, int n, RngStream& rng) {
  switch (p) {
    case Problem::hetero: return envs::sample_hetero(n, rng);
    case Problem::bimodal: return envs::sample_bimodal(n, rng);
    case Problem::wetchicken: {
      envs::WetChickenParams params;
      return envs::transitions_to_dataset(envs::wetchicken_batch(params, n, rng));
    }
  }
  throw std::logic_error("unknown problem");
}

Dataset sample_test_set(Problem p, int n, RngStream& rng) {
  Dataset d;
  d.x = sample_pool_inputs(p, n, rng);
  d.y.resize(n, problem_target_dim(p));
  for (int i = 0; i < n; ++i) d.y.row(i) = label_input(p, d.x.row(i).transpose(), rng).transpose();
  return d;
}

void AlLoopConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("al: iterations must be non-negative");
  if (pool_size < 1) throw std::invalid_argument("al: pool size must be >= 1");
  if (batch_size < 1 || batch_size > pool_size) {
    throw std::invalid_argument("al: need 1 <= batch size <= pool size");
  }
  if (test_size < 1 || repetitions < 1 || initial_data < 1) {
    throw std::invalid_argument("al: sizes must be >= 1");
  }
  if (eval_samples < 1) throw std::invalid_argument("al: eval samples must be >= 1");
  train.validate();
  decomposition.validate();
}

std::vector<int> select_batch(const std::vector<double>& scores, int batch_size) {
  if (scores.empty()) throw std::invalid_argument("select_batch: empty pool");
  if (batch_size < 1 || batch_size > static_cast<int>(scores.size())) {
    throw std::invalid_argument("select_batch: batch size out of range");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<int> chosen(order.begin(), order.begin() + batch_size);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

double acquisition_score(AcquisitionMethod method, const BnnLvModel& model,
                         const PosteriorEnsemble& posterior, const VectorXd& x,
                         const uncertainty::DecompositionConfig& cfg, RngStream& rng) {
  PredictiveSamples samples = sample_predictive(model, posterior, x, cfg.m_weights, cfg.l_noise, rng);
  uncertainty::EntropyDecomposition ent = uncertainty::entropy_decomposition(samples, cfg.k);
  switch (method) {
    case AcquisitionMethod::mutual_information: return ent.mutual_information;
    case AcquisitionMethod::total_entropy: return ent.total;
    case AcquisitionMethod::gp_entropy: break;
  }
  throw std::invalid_argument("acquisition_score: GP scoring needs gp_acquisition_score");
}

double gp_acquisition_score(const std::vector<GpRegressor>& gps, const VectorXd& x) {
  double acc = 0.0;
  for (const auto& gp : gps) acc += gp.predictive_entropy(x);
  return acc;
}

std::vector<double> AlCurve::final_values() const {
  int last_iter = 0;
  for (const auto& r : records) last_iter = std::max(last_iter, r.iteration);
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.iteration == last_iter &&
        std::find(failed_repetitions.begin(), failed_repetitions.end(), r.repetition) ==
            failed_repetitions.end()) {
      out.push_back(r.test_log_likelihood);
    }
  }
  return out;
}

namespace {

struct BnnState {
  BnnLvModel model;
  PosteriorEnsemble ensemble;
};

BnnState train_bnn(Problem problem, const Dataset& data, const AlLoopConfig& cfg, RngStream rng) {
  BnnLvModel model = BnnLvModel::make(problem_input_dim(problem), {20, 20},
                                      problem_target_dim(problem));
  inference::AlphaTrainResult trained = inference::train_alpha(model, data, cfg.train, rng);
  RngStream ens_rng = rng.derive(0xE);
  PosteriorEnsemble ensemble =
      posterior_to_ensemble(model, trained.posterior, cfg.decomposition.m_weights, ens_rng);
  return BnnState{std::move(model), std::move(ensemble)};
}

std::vector<GpRegressor> fit_gps(Problem problem, const Dataset& data, const AlLoopConfig& cfg,
                                 RngStream& rng) {
  MatrixXd x = data.x;
  MatrixXd y = data.y;
  if (data.size() > cfg.gp_max_train) {
    // Random training subset keeps the exact GP tractable as the set grows.
    std::vector<int> idx(static_cast<std::size_t>(data.size()));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = data.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
    x.resize(cfg.gp_max_train, data.x.cols());
    y.resize(cfg.gp_max_train, data.y.cols());
    for (int i = 0; i < cfg.gp_max_train; ++i) {
      x.row(i) = data.x.row(idx[static_cast<std::size_t>(i)]);
      y.row(i) = data.y.row(idx[static_cast<std::size_t>(i)]);
    }
  }
  std::vector<GpRegressor> gps;
  for (int k = 0; k < y.cols(); ++k) {
    RngStream fit_rng = rng.derive(static_cast<std::uint64_t>(k));
    gps.push_back(GpRegressor::fit(x, y.col(k), cfg.gp_options, fit_rng));
  }
  return gps;
}

double gp_test_ll(const std::vector<GpRegressor>& gps, const Dataset& test) {
  double acc = 0.0;
  for (int i = 0; i < test.size(); ++i) {
    for (std::size_t k = 0; k < gps.size(); ++k) {
      acc += gps[k].log_likelihood(test.x.row(i).transpose(), test.y(i, static_cast<int>(k)));
    }
  }
  return acc / static_cast<double>(test.size());
}

void append_rows(Dataset& data, const MatrixXd& x_new, const MatrixXd& y_new) {
  Dataset grown;
  grown.x.resize(data.x.rows() + x_new.rows(), data.x.cols());
  grown.y.resize(data.y.rows() + y_new.rows(), data.y.cols());
  grown.x << data.x, x_new;
  grown.y << data.y, y_new;
  data = std::move(grown);
}

}  // namespace

AlCurve run_al_experiment(AcquisitionMethod method, Problem problem, const AlLoopConfig& cfg,
                          std::uint64_t seed) {
  cfg.validate();
  AlCurve curve;
  curve.method = method;
  curve.problem = problem;
  curve.records.resize(static_cast<std::size_t>(cfg.repetitions) * (cfg.iterations + 1));

  std::mutex failures_mutex;
  util::parallel_for(cfg.repetitions, cfg.workers, [&](int rep) {
    // Shared streams (same for every method): initial data, test set, pools.
    RngStream shared(seed, 7919 * static_cast<std::uint64_t>(problem) + static_cast<std::uint64_t>(rep));
    RngStream data_rng = shared.derive(1);
    RngStream test_rng = shared.derive(2);
    // Method-specific stream: training initialization, MC draws, labels.
    RngStream method_rng(seed, 104729 * static_cast<std::uint64_t>(method) +
                                   31 * static_cast<std::uint64_t>(problem) +
                                   static_cast<std::uint64_t>(rep));

    Dataset train = sample_initial_data(problem, cfg.initial_data, data_rng);
    Dataset test = sample_test_set(problem, cfg.test_size, test_rng);

    try {
      for (int iter = 0; iter <= cfg.iterations; ++iter) {
        RngStream iter_rng = method_rng.derive(static_cast<std::uint64_t>(iter));
        double test_ll = 0.0;
        std::vector<GpRegressor> gps;
        std::optional<BnnState> bnn;
        const bool is_gp = method == AcquisitionMethod::gp_entropy;
        if (is_gp) {
          RngStream gp_rng = iter_rng.derive(1);
          gps = fit_gps(problem, train, cfg, gp_rng);
          test_ll = gp_test_ll(gps, test);
        } else {
          bnn = train_bnn(problem, train, cfg, iter_rng.derive(1));
          RngStream eval_rng = iter_rng.derive(2);
          test_ll = test_log_likelihood(bnn->model, bnn->ensemble, test, cfg.eval_samples, eval_rng);
        }
        AlRecord& rec = curve.records[static_cast<std::size_t>(rep) * (cfg.iterations + 1) + iter];
        rec.repetition = rep;
        rec.iteration = iter;
        rec.train_size = train.size();
        rec.test_log_likelihood = test_ll;

        if (iter == cfg.iterations) break;

        RngStream pool_rng = shared.derive(100 + static_cast<std::uint64_t>(iter));
        MatrixXd pool = sample_pool_inputs(problem, cfg.pool_size, pool_rng);
        std::vector<double> scores(static_cast<std::size_t>(cfg.pool_size));
        RngStream score_rng = iter_rng.derive(3);
        for (int i = 0; i < cfg.pool_size; ++i) {
          RngStream point_rng = score_rng.derive(static_cast<std::uint64_t>(i));
          scores[static_cast<std::size_t>(i)] =
              is_gp ? gp_acquisition_score(gps, pool.row(i).transpose())
                    : acquisition_score(method, bnn->model, bnn->ensemble, pool.row(i).transpose(),
                                        cfg.decomposition, point_rng);
        }
        std::vector<int> chosen = select_batch(scores, cfg.batch_size);
        MatrixXd x_new(cfg.batch_size, pool.cols());
        MatrixXd y_new(cfg.batch_size, problem_target_dim(problem));
        RngStream label_rng = iter_rng.derive(4);
        for (int i = 0; i < cfg.batch_size; ++i) {
          x_new.row(i) = pool.row(chosen[static_cast<std::size_t>(i)]);
          y_new.row(i) = label_input(problem, x_new.row(i).transpose(), label_rng).transpose();
        }
        append_rows(train, x_new, y_new);
      }
    } catch (const std::exception&) {
      std::lock_guard<std::mutex> lock(failures_mutex);
      curve.failed_repetitions.push_back(rep);
    }
  });
  std::sort(curve.failed_repetitions.begin(), curve.failed_repetitions.end());
  return curve;
}

}  // namespace bnnlv::al
