#pragma once

#include <Eigen/Dense>

#include "bnnlv/knn_entropy.hpp"
#include "bnnlv/model.hpp"

namespace bnnlv::uncertainty {

struct DecompositionConfig {
  int k = 25;          // neighbor count for the entropy estimate
  int m_weights = 200; // weight draws
  int l_noise = 200;   // latent/noise draws per weight
  void validate() const;
};

// Total / aleatoric / epistemic uncertainty at one query input under both the
// entropy metric (nats, mutual information as the epistemic part) and the
// variance metric (law of total variance, per output dimension).
struct UncertaintyReport {
  double entropy_total = 0.0;
  double entropy_aleatoric = 0.0;
  double mutual_information = 0.0;
  Eigen::VectorXd var_total, var_epistemic, var_aleatoric;
  double std_total = 0.0;  // sqrt of summed total variance over outputs
};

struct VarianceDecomposition {
  Eigen::VectorXd total, epistemic, aleatoric;
};

// Law of total variance on an M x L x K tensor stored as (M*L) x K with rows
// grouped by weight draw. Population variances make the identity
// total = epistemic + aleatoric exact.
VarianceDecomposition variance_decomposition(const Eigen::MatrixXd& values, int m_weights,
                                             int l_noise);
VarianceDecomposition variance_decomposition(const PredictiveSamples& samples);

double std_total(double var_epistemic, double var_aleatoric);

struct EntropyDecomposition {
  double total = 0.0;
  double aleatoric = 0.0;
  double mutual_information = 0.0;
};

// Both entropy terms from one shared predictive tensor: the pooled estimate
// over all M*L samples and the average per-weight-draw estimate.
EntropyDecomposition entropy_decomposition(const PredictiveSamples& samples, int k);

UncertaintyReport decompose(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                            const Eigen::VectorXd& x_star, const DecompositionConfig& cfg,
                            RngStream& rng);

}  // namespace bnnlv::uncertainty
