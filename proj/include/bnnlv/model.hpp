#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bnnlv/dense_net.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Dataset {
  MatrixXd x;  // N x D
  MatrixXd y;  // N x K
  int size() const { return static_cast<int>(x.rows()); }
  int feature_dim() const { return static_cast<int>(x.cols()); }
  int target_dim() const { return static_cast<int>(y.cols()); }
  void validate() const;  // finite entries, matching rows, N >= 1
};

// Regression network with one latent input appended to the features and
// additive diagonal Gaussian output noise. The latent draws from N(0, gamma_z)
// give the model its capacity for heteroscedastic and multimodal noise.
struct BnnLvModel {
  nn::DenseNet net;          // input size = D + 1 (features plus latent)
  double gamma_z = 1.0;      // latent prior variance
  double lambda_w = 1.0;     // weight prior variance
  VectorXd noise_variance;   // Sigma, one entry per output

  BnnLvModel(nn::DenseNet network, double gamma_z_, double lambda_w_, VectorXd noise_variance_);
  static BnnLvModel make(int feature_dim, const std::vector<int>& hidden, int target_dim,
                         double gamma_z = 1.0, double lambda_w = 1.0, double noise_var = 0.1);

  int feature_dim() const { return net.input_size() - 1; }
  int target_dim() const { return net.output_size(); }
};

// Mean-field Gaussian posterior over weights plus one Gaussian factor per
// training point's latent input. Noise log-variances are point parameters
// learned alongside it.
struct FactorizedGaussianPosterior {
  VectorXd m_w, v_w;
  VectorXd m_z, v_z;
  VectorXd noise_log_variance;
  void validate(const BnnLvModel& model, int n_data) const;
};

struct PosteriorEnsemble {
  enum class Provenance { hmc, variational };
  std::vector<VectorXd> weight_samples;
  std::vector<VectorXd> noise_variances;  // optional, parallel to weight_samples
  Provenance provenance = Provenance::variational;

  int size() const { return static_cast<int>(weight_samples.size()); }
  const VectorXd& noise_for(const BnnLvModel& model, int i) const;
  void validate(const BnnLvModel& model) const;
};

// Unnormalized log posterior over (W, z) at fixed noise variances; the HMC
// target extends it with log-Sigma coordinates.
double log_joint(const BnnLvModel& model, const VectorXd& params, const VectorXd& z,
                 const Dataset& data);

// M x L x K predictive sample tensor at one query input; rows are grouped by
// weight draw (row i*L + l belongs to weight sample i), so per-draw
// conditional statistics stay computable. Latents come from the prior.
struct PredictiveSamples {
  MatrixXd values;  // (M*L) x K
  int m_weights = 0;
  int l_noise = 0;
  int target_dim() const { return static_cast<int>(values.cols()); }
};

PredictiveSamples sample_predictive(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                                    const VectorXd& x_star, int m_weights, int l_noise,
                                    RngStream& rng);

PosteriorEnsemble posterior_to_ensemble(const BnnLvModel& model,
                                        const FactorizedGaussianPosterior& q, int m_weights,
                                        RngStream& rng);

// Mean over test points of log (1/S) sum_s p(y | x, W_s, z_s), with weight
// draws shared across points and fresh latent/noise draws per (point, draw).
double test_log_likelihood(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                           const Dataset& test, int samples_per_point, RngStream& rng);

}  // namespace bnnlv
