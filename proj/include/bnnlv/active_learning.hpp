#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnnlv/alpha_training.hpp"
#include "bnnlv/envs.hpp"
#include "bnnlv/gp.hpp"
#include "bnnlv/model.hpp"
#include "bnnlv/uncertainty.hpp"

namespace bnnlv::al {

enum class AcquisitionMethod { mutual_information, total_entropy, gp_entropy };
enum class Problem { hetero, bimodal, wetchicken };

std::string method_name(AcquisitionMethod m);
std::string problem_name(Problem p);
AcquisitionMethod method_from_name(const std::string& name);
Problem problem_from_name(const std::string& name);

int problem_input_dim(Problem p);
int problem_target_dim(Problem p);

// Uniform pool/test input ranges: hetero x in [-6, 6]; bimodal x in
// [-0.5, 2]; wet-chicken uniform over state x action space.
Eigen::MatrixXd sample_pool_inputs(Problem p, int n, RngStream& rng);
Eigen::VectorXd label_input(Problem p, const Eigen::VectorXd& x, RngStream& rng);
Dataset sample_initial_data(Problem p, int n, RngStream& rng);
Dataset sample_test_set(Problem p, int n, RngStream& rng);

struct AlLoopConfig {
  int iterations = 30;
  int pool_size = 50;
  int batch_size = 5;
  int test_size = 500;
  int repetitions = 5;
  int initial_data = 750;
  // BNN retraining (from scratch each iteration).
  inference::AlphaTrainConfig train;
  uncertainty::DecompositionConfig decomposition;
  int eval_samples = 100;  // S for the test log-likelihood
  // GP baseline.
  GpRegressor::FitOptions gp_options;
  int gp_max_train = 400;  // training subset cap for the exact GP
  int workers = 1;
  void validate() const;
};

// Top-batch_size indices; ties broken by the lowest index.
std::vector<int> select_batch(const std::vector<double>& scores, int batch_size);

double acquisition_score(AcquisitionMethod method, const BnnLvModel& model,
                         const PosteriorEnsemble& posterior, const Eigen::VectorXd& x,
                         const uncertainty::DecompositionConfig& cfg, RngStream& rng);
double gp_acquisition_score(const std::vector<GpRegressor>& gps, const Eigen::VectorXd& x);

struct AlRecord {
  int repetition = 0;
  int iteration = 0;
  int train_size = 0;
  double test_log_likelihood = 0.0;
};

struct AlCurve {
  AcquisitionMethod method;
  Problem problem;
  std::vector<AlRecord> records;             // every repetition x iteration
  std::vector<int> failed_repetitions;       // excluded from aggregates
  std::vector<double> final_values() const;  // per-repetition final test LL
};

// The full loop: sample a pool, score it, label the chosen batch, retrain
// from scratch, evaluate on the held-out test set. Pools, initial data and
// test sets depend only on (seed, problem, repetition), so methods face
// identical queries.
AlCurve run_al_experiment(AcquisitionMethod method, Problem problem, const AlLoopConfig& cfg,
                          std::uint64_t seed);

}  // namespace bnnlv::al
