#pragma once

#include <vector>

#include "bnnlv/autodiff.hpp"
#include "bnnlv/model.hpp"

namespace bnnlv::inference {

struct AlphaTrainConfig {
  double alpha = 1.0;  // 1e-6 is the variational-Bayes limit
  int epochs = 2000;
  double learning_rate = 1e-3;
  int k_mc = 8;       // reparameterized draws per step
  int minibatch = 75;
  void validate() const;
};

// Common random numbers for one energy evaluation: eps_w[k] perturbs the
// weight means, eps_z(k, b) the latent mean of batch point b.
struct AlphaDraws {
  std::vector<Eigen::VectorXd> eps_w;
  Eigen::MatrixXd eps_z;
};

AlphaDraws make_draws(int k_mc, int param_count, int batch_size, RngStream& rng);

// Single-term reparameterized alpha-energy:
//   KL(q(W)||p(W)) + sum_batch KL(q(z_n)||p(z_n))
//   - (N/B) * sum_batch (1/alpha) log (1/K) sum_k exp(alpha * ll_{n,k}).
double alpha_energy_with_draws(const BnnLvModel& model, const FactorizedGaussianPosterior& q,
                               const Dataset& data, const std::vector<int>& batch, double alpha,
                               const AlphaDraws& draws);
double alpha_energy(const BnnLvModel& model, const FactorizedGaussianPosterior& q,
                    const Dataset& data, const std::vector<int>& batch, double alpha, int k_mc,
                    RngStream& rng);

// Negative ELBO on the same draws; the alpha -> 0 limit of the energy.
double negative_elbo_with_draws(const BnnLvModel& model, const FactorizedGaussianPosterior& q,
                                const Dataset& data, const std::vector<int>& batch,
                                const AlphaDraws& draws);

struct AlphaTrainResult {
  FactorizedGaussianPosterior posterior;
  std::vector<double> energy_trace;  // per-epoch mean step energy
};

// Adam on the energy with softplus-parameterized variances. Deterministic
// given (model, data, config, rng seed).
AlphaTrainResult train_alpha(const BnnLvModel& model, const Dataset& data,
                             const AlphaTrainConfig& cfg, RngStream& rng);

}  // namespace bnnlv::inference
