#include "bnnlv/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "bnnlv/autodiff.hpp"

namespace bnnlv::policy {

namespace {
constexpr double kVarianceFloor = 1e-12;
}

VectorXd PolicyNetwork::action(const VectorXd& state) const {
  return nn::forward(net, params, state).array().tanh();
}

PolicyNetwork make_policy(int state_dim, const std::vector<int>& hidden, int action_dim,
                          RngStream& rng) {
  std::vector<int> sizes;
  sizes.push_back(state_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim);
  nn::DenseNet net(sizes);
  if (net.num_hidden_layers() < 1) throw std::invalid_argument("policy: need at least one hidden layer");
  VectorXd params = nn::random_params(net, 0.1, rng);
  return PolicyNetwork{std::move(net), std::move(params)};
}

void RolloutConfig::validate() const {
  if (horizon < 1 || m_weights < 1 || n_inner < 1 || start_minibatch < 1) {
    throw std::invalid_argument("rollout: T, M, N and the start minibatch must be >= 1");
  }
}

void RiskConfig::validate() const {
  if (!std::isfinite(beta) || !std::isfinite(gamma_risk) || beta < 0.0 || gamma_risk < 0.0) {
    throw std::invalid_argument("risk: beta and gamma_risk must be finite and >= 0");
  }
}

double cost(const envs::WetChickenParams& params, const envs::WcState& state) {
  return params.length - state.y;
}

double risk_penalty_at(const MatrixXd& c_t, const RiskConfig& risk) {
  if (risk.beta == 0.0 && risk.gamma_risk == 0.0) return 0.0;
  const Eigen::Index m = c_t.rows(), n = c_t.cols();
  if (m < 2 || n < 2) throw std::invalid_argument("risk penalty: need M >= 2 and N >= 2");
  VectorXd row_means = c_t.rowwise().mean();
  double grand = row_means.mean();
  double epistemic = (row_means.array() - grand).square().sum() / static_cast<double>(m);
  double aleatoric = (c_t.array().colwise() - row_means.array()).square().sum() /
                     static_cast<double>(m * n);
  return std::sqrt(risk.beta * risk.beta * epistemic + risk.gamma_risk * risk.gamma_risk * aleatoric);
}

double risk_objective(const RolloutCosts& costs, const RiskConfig& risk) {
  risk.validate();
  double acc = 0.0;
  for (const MatrixXd& c_t : costs.per_step) {
    acc += c_t.mean() + risk_penalty_at(c_t, risk);
  }
  return acc;
}

std::vector<double> model_rollout(const BnnLvModel& model, const VectorXd& weight_sample,
                                  const PolicyNetwork& policy, const envs::WcState& s0,
                                  const RolloutDraws& draws, int horizon, bool* truncated) {
  if (draws.z.cols() < horizon || draws.eps.cols() < horizon) {
    throw std::invalid_argument("model_rollout: draws shorter than the horizon");
  }
  envs::WetChickenParams box;
  if (truncated) *truncated = false;
  std::vector<double> costs;
  costs.reserve(static_cast<std::size_t>(horizon));
  VectorXd state(2);
  state << s0.x, s0.y;
  VectorXd input(model.net.input_size());
  for (int t = 0; t < horizon; ++t) {
    VectorXd a = policy.action(state);
    input.head(2) = state;
    input.segment(2, a.size()) = a;
    input[input.size() - 1] = draws.z(0, t);
    VectorXd next = nn::forward(model.net, weight_sample, input) + draws.eps.col(t);
    if (!next.allFinite()) {
      if (truncated) *truncated = true;
      break;
    }
    state[0] = std::clamp(next[0], 0.0, box.width);
    state[1] = std::clamp(next[1], 0.0, box.length);
    costs.push_back(cost(box, envs::WcState{state[0], state[1]}));
  }
  return costs;
}

namespace {

// Model weights stay constant on the tape; gradients flow through the policy.
ad::Var policy_forward(const PolicyNetwork& policy, ad::Var params, ad::Var states) {
  return ad::tanh_(ad::dense_forward(policy.net, params, states));
}

}  // namespace

std::pair<double, VectorXd> rollout_cost_gradient(const BnnLvModel& model,
                                                  const VectorXd& weight_sample,
                                                  const PolicyNetwork& policy,
                                                  const envs::WcState& s0,
                                                  const RolloutDraws& draws, int horizon) {
  envs::WetChickenParams box;
  VectorXd lo(2), hi(2);
  lo << 0.0, 0.0;
  hi << box.width, box.length;
  ad::Tape tape;
  ad::Var params = tape.input(policy.params);
  MatrixXd s0m(2, 1);
  s0m << s0.x, s0.y;
  ad::Var state = tape.constant(s0m);
  std::vector<ad::Var> step_costs;
  for (int t = 0; t < horizon; ++t) {
    ad::Var a = policy_forward(policy, params, state);
    ad::Var inputs = ad::concat_rows({state, a, tape.constant(draws.z.block(0, t, 1, 1))});
    ad::Var pred = ad::dense_forward_const(model.net, weight_sample, inputs);
    ad::Var next = ad::add(pred, tape.constant(draws.eps.col(t)));
    state = ad::clamp_box(next, lo, hi);
    step_costs.push_back(ad::add_scalar(ad::neg(ad::row_range(state, 1, 1)), box.length));
  }
  ad::Var total = ad::sum(ad::concat_rows(step_costs));
  double value = total.scalar();
  tape.backward(total);
  return {value, tape.grad(params).reshaped()};
}

PolicyTrainResult train_policy(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                               const std::vector<envs::WcState>& start_states,
                               const PolicyTrainConfig& cfg, RngStream& rng) {
  cfg.rollout.validate();
  cfg.risk.validate();
  posterior.validate(model);
  if (start_states.empty()) throw std::invalid_argument("train_policy: empty start-state batch");
  const bool penalized = cfg.risk.beta > 0.0 || cfg.risk.gamma_risk > 0.0;
  if (penalized && (cfg.rollout.m_weights < 2 || cfg.rollout.n_inner < 2)) {
    throw std::invalid_argument("train_policy: risk weights need M >= 2 and N >= 2");
  }

  envs::WetChickenParams box;
  VectorXd lo(2), hi(2);
  lo << 0.0, 0.0;
  hi << box.width, box.length;
  const int t_max = cfg.rollout.horizon;
  const int m = cfg.rollout.m_weights;
  const int n = cfg.rollout.n_inner;
  const double z_std = std::sqrt(std::max(model.gamma_z, kVarianceFloor));

  PolicyNetwork policy = make_policy(2, cfg.hidden, 2, rng);
  VectorXd adam_m1 = VectorXd::Zero(policy.params.size());
  VectorXd adam_m2 = VectorXd::Zero(policy.params.size());
  std::vector<double> objective_trace;
  objective_trace.reserve(static_cast<std::size_t>(cfg.epochs));
  int skipped_steps = 0;
  int adam_t = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    bool ok = true;
    double objective_value = 0.0;
    VectorXd grad = VectorXd::Zero(policy.params.size());
    try {
      ad::Tape tape;
      ad::Var params = tape.input(policy.params);
      std::vector<std::vector<ad::Var>> cost_rows(static_cast<std::size_t>(t_max));
      for (int b = 0; b < cfg.rollout.start_minibatch; ++b) {
        const envs::WcState& s0 = start_states[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(start_states.size())))];
        MatrixXd s0m(2, n);
        s0m.row(0).setConstant(s0.x);
        s0m.row(1).setConstant(s0.y);
        for (int mi = 0; mi < m; ++mi) {
          int wi = rng.uniform_int(posterior.size());
          const VectorXd& w = posterior.weight_samples[static_cast<std::size_t>(wi)];
          VectorXd sigma_sd =
              posterior.noise_for(model, wi).cwiseMax(kVarianceFloor).cwiseSqrt();
          ad::Var state = tape.constant(s0m);
          for (int t = 0; t < t_max; ++t) {
            MatrixXd z_row(1, n);
            for (int j = 0; j < n; ++j) z_row(0, j) = z_std * rng.normal();
            MatrixXd eps(2, n);
            for (int r = 0; r < 2; ++r) {
              for (int j = 0; j < n; ++j) eps(r, j) = sigma_sd[r] * rng.normal();
            }
            ad::Var a = policy_forward(policy, params, state);
            ad::Var inputs = ad::concat_rows({state, a, tape.constant(z_row)});
            ad::Var pred = ad::dense_forward_const(model.net, w, inputs);
            state = ad::clamp_box(ad::add(pred, tape.constant(eps)), lo, hi);
            cost_rows[static_cast<std::size_t>(t)].push_back(
                ad::add_scalar(ad::neg(ad::row_range(state, 1, 1)), box.length));
          }
        }
      }
      // J = sum_t mean C(t) + risk penalty per step.
      ad::Var objective = tape.constant(MatrixXd::Zero(1, 1));
      for (int t = 0; t < t_max; ++t) {
        ad::Var c_t = ad::concat_rows(cost_rows[static_cast<std::size_t>(t)]);
        objective = ad::add(objective, ad::mean(c_t));
        if (penalized) {
          ad::Var epi = ad::pop_var(ad::row_mean(c_t));
          ad::Var ale = ad::mean_row_pop_var(c_t);
          ad::Var inside = ad::add(ad::scale(epi, cfg.risk.beta * cfg.risk.beta),
                                   ad::scale(ale, cfg.risk.gamma_risk * cfg.risk.gamma_risk));
          objective = ad::add(objective, ad::sqrt_(inside));
        }
      }
      objective_value = objective.scalar();
      if (!std::isfinite(objective_value)) throw std::runtime_error("non-finite objective");
      tape.backward(objective);
      grad = tape.grad(params).reshaped();
      if (!grad.allFinite()) throw std::runtime_error("non-finite gradient");
    } catch (const std::exception&) {
      ok = false;
    }

    if (!ok) {
      ++skipped_steps;
      if (skipped_steps > cfg.epochs / 10) {
        throw std::runtime_error("train_policy: more than 10% of steps skipped (epoch " +
                                 std::to_string(epoch) + ")");
      }
      objective_trace.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }

    ++adam_t;
    const double b1 = 0.9, b2 = 0.999, eps_adam = 1e-8;
    double c1 = 1.0 - std::pow(b1, adam_t), c2 = 1.0 - std::pow(b2, adam_t);
    for (Eigen::Index i = 0; i < policy.params.size(); ++i) {
      adam_m1[i] = b1 * adam_m1[i] + (1.0 - b1) * grad[i];
      adam_m2[i] = b2 * adam_m2[i] + (1.0 - b2) * grad[i] * grad[i];
      policy.params[i] -= cfg.learning_rate * (adam_m1[i] / c1) / (std::sqrt(adam_m2[i] / c2) + eps_adam);
    }
    objective_trace.push_back(objective_value);
  }
  return PolicyTrainResult{std::move(policy), std::move(objective_trace), skipped_steps};
}

MatrixXd evaluate_ground_truth(const PolicyNetwork& policy, const envs::WetChickenParams& params,
                               const std::vector<envs::WcState>& starts, int rollouts, int horizon,
                               RngStream& rng) {
  if (rollouts < 1) throw std::invalid_argument("evaluate_ground_truth: need R >= 1");
  MatrixXd mean_costs = MatrixXd::Zero(static_cast<Eigen::Index>(starts.size()), horizon);
  VectorXd state(2);
  for (std::size_t si = 0; si < starts.size(); ++si) {
    for (int r = 0; r < rollouts; ++r) {
      envs::WcState s = starts[si];
      for (int t = 0; t < horizon; ++t) {
        state << s.x, s.y;
        VectorXd a = policy.action(state);
        s = envs::wetchicken_step(params, s, envs::WcAction{a[0], a[1]}, rng.uniform(-1.0, 1.0)).next;
        mean_costs(static_cast<Eigen::Index>(si), t) += cost(params, s);
      }
    }
  }
  mean_costs /= static_cast<double>(rollouts);
  return mean_costs;
}

ModelBiasReport model_bias(const PolicyNetwork& policy, const BnnLvModel& model,
                           const PosteriorEnsemble& posterior,
                           const envs::WetChickenParams& params,
                           const std::vector<envs::WcState>& starts, int horizon,
                           int rollouts_true, int rollouts_model, RngStream& rng) {
  posterior.validate(model);
  RngStream true_rng = rng.derive(1);
  RngStream model_rng = rng.derive(2);
  MatrixXd truth = evaluate_ground_truth(policy, params, starts, rollouts_true, horizon, true_rng);

  const double z_std = std::sqrt(std::max(model.gamma_z, kVarianceFloor));
  ModelBiasReport report;
  report.per_start_bias.resize(starts.size(), 0.0);
  double total_truth = 0.0;
  VectorXd state(2);
  for (std::size_t si = 0; si < starts.size(); ++si) {
    VectorXd model_mean = VectorXd::Zero(horizon);
    for (int r = 0; r < rollouts_model; ++r) {
      int wi = model_rng.uniform_int(posterior.size());
      const VectorXd& w = posterior.weight_samples[static_cast<std::size_t>(wi)];
      VectorXd sigma_sd = posterior.noise_for(model, wi).cwiseMax(kVarianceFloor).cwiseSqrt();
      envs::WcState s = starts[si];
      VectorXd input(model.net.input_size());
      for (int t = 0; t < horizon; ++t) {
        state << s.x, s.y;
        VectorXd a = policy.action(state);
        input.head(2) = state;
        input.segment(2, a.size()) = a;
        input[input.size() - 1] = z_std * model_rng.normal();
        VectorXd next = nn::forward(model.net, w, input);
        for (int k = 0; k < 2; ++k) next[k] += sigma_sd[k] * model_rng.normal();
        s.x = std::clamp(next[0], 0.0, params.width);
        s.y = std::clamp(next[1], 0.0, params.length);
        model_mean[t] += cost(params, s);
      }
    }
    model_mean /= static_cast<double>(rollouts_model);
    double b = (truth.row(static_cast<Eigen::Index>(si)).transpose() - model_mean).squaredNorm();
    report.per_start_bias[si] = b;
    total_truth += truth.row(static_cast<Eigen::Index>(si)).sum();
  }
  report.mean_bias = 0.0;
  for (double b : report.per_start_bias) report.mean_bias += b;
  report.mean_bias /= static_cast<double>(starts.size());
  report.ground_truth_cost = total_truth / static_cast<double>(starts.size());
  return report;
}

VectorXd nn_baseline_risk(const std::vector<MatrixXd>& rollout_states, const MatrixXd& centroids) {
  if (rollout_states.empty()) throw std::invalid_argument("nn_baseline_risk: no rollouts");
  if (centroids.rows() < 1) throw std::invalid_argument("nn_baseline_risk: need centroids");
  const Eigen::Index horizon = rollout_states.front().rows();
  VectorXd acc = VectorXd::Zero(horizon);
  for (const MatrixXd& states : rollout_states) {
    if (states.rows() != horizon) throw std::invalid_argument("nn_baseline_risk: ragged rollouts");
    for (Eigen::Index t = 0; t < horizon; ++t) {
      acc[t] += nearest_centroid_distance(centroids, states.row(t).transpose());
    }
  }
  return acc / static_cast<double>(rollout_states.size());
}

}  // namespace bnnlv::policy
