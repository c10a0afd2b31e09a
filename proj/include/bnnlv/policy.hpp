#pragma once

#include <vector>

#include "bnnlv/envs.hpp"
#include "bnnlv/kmeans.hpp"
#include "bnnlv/model.hpp"

namespace bnnlv::policy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Deterministic policy: a rectifier network with tanh output squashing into
// the [-1, 1] action box.
struct PolicyNetwork {
  nn::DenseNet net;
  VectorXd params;
  VectorXd action(const VectorXd& state) const;
};

PolicyNetwork make_policy(int state_dim, const std::vector<int>& hidden, int action_dim,
                          RngStream& rng);

struct RolloutConfig {
  int horizon = 30;      // T
  int m_weights = 20;    // weight draws per objective evaluation
  int n_inner = 10;      // rollouts per weight draw
  int start_minibatch = 1;
  void validate() const;
};

struct RiskConfig {
  double beta = 0.0;        // epistemic risk weight
  double gamma_risk = 0.0;  // aleatoric risk weight
  void validate() const;
};

double cost(const envs::WetChickenParams& params, const envs::WcState& state);  // l - y

// Per-step cost matrices C(t), one M x N matrix per step t = 1..T.
struct RolloutCosts {
  std::vector<MatrixXd> per_step;
  int horizon() const { return static_cast<int>(per_step.size()); }
};

// sum_t { mean C(t) + sqrt(beta^2 var_rows + gamma^2 mean within-row var) }
// with population variances; beta = gamma = 0 is the plain expected cost.
double risk_objective(const RolloutCosts& costs, const RiskConfig& risk);
// The penalty term alone (zero when both weights are zero).
double risk_penalty_at(const MatrixXd& c_t, const RiskConfig& risk);

// Pre-sampled per-step draws for one trajectory: z is 1 x T, eps is K x T.
struct RolloutDraws {
  MatrixXd z;
  MatrixXd eps;
};

// Deterministic rollout through the model under fixed draws; costs at the
// visited states s_1..s_T. A non-finite state truncates and flags.
std::vector<double> model_rollout(const BnnLvModel& model, const VectorXd& weight_sample,
                                  const PolicyNetwork& policy, const envs::WcState& s0,
                                  const RolloutDraws& draws, int horizon, bool* truncated = nullptr);

// Same trajectory as a taped objective for gradient checks: returns the total
// cost and the gradient with respect to the policy parameters.
std::pair<double, VectorXd> rollout_cost_gradient(const BnnLvModel& model,
                                                  const VectorXd& weight_sample,
                                                  const PolicyNetwork& policy,
                                                  const envs::WcState& s0,
                                                  const RolloutDraws& draws, int horizon);

struct PolicyTrainConfig {
  RolloutConfig rollout;
  RiskConfig risk;
  int epochs = 300;  // gradient steps (one start-state minibatch each)
  double learning_rate = 1e-3;
  std::vector<int> hidden = {20, 20};
};

struct PolicyTrainResult {
  PolicyNetwork policy;
  std::vector<double> objective_trace;
  int skipped_steps = 0;
};

// Pathwise policy search: per step, sample a start state from the batch,
// draw M weights and M*N noise sequences, roll out, and descend the risk
// objective's gradient. Steps with non-finite results are skipped; more than
// 10% skipped aborts.
PolicyTrainResult train_policy(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                               const std::vector<envs::WcState>& start_states,
                               const PolicyTrainConfig& cfg, RngStream& rng);

// Mean cost per step under the simulator: result is starts x T.
MatrixXd evaluate_ground_truth(const PolicyNetwork& policy, const envs::WetChickenParams& params,
                               const std::vector<envs::WcState>& starts, int rollouts, int horizon,
                               RngStream& rng);

struct ModelBiasReport {
  std::vector<double> per_start_bias;  // sum_t (E_true[c_t] - E_model[c_t])^2
  double mean_bias = 0.0;
  double ground_truth_cost = 0.0;  // mean over starts of sum_t E_true[c_t]
};

ModelBiasReport model_bias(const PolicyNetwork& policy, const BnnLvModel& model,
                           const PosteriorEnsemble& posterior,
                           const envs::WetChickenParams& params,
                           const std::vector<envs::WcState>& starts, int horizon,
                           int rollouts_true, int rollouts_model, RngStream& rng);

// Average distance to the nearest k-means centroid per rollout step; the
// sigma(c_t) stand-in used by the nearest-neighbor baseline. rollout_states
// holds one T x state_dim matrix per rollout.
VectorXd nn_baseline_risk(const std::vector<MatrixXd>& rollout_states, const MatrixXd& centroids);

}  // namespace bnnlv::policy
