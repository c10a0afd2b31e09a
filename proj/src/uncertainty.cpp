#include "bnnlv/uncertainty.hpp"

#include <cmath>
#include <stdexcept>

namespace bnnlv::uncertainty {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void DecompositionConfig::validate() const {
  if (k < 1 || k >= l_noise) throw std::invalid_argument("decomposition: need 1 <= k < L");
  if (m_weights < 2 || l_noise < 2) throw std::invalid_argument("decomposition: need M, L >= 2");
}

VarianceDecomposition variance_decomposition(const MatrixXd& values, int m_weights, int l_noise) {
  if (m_weights < 2 || l_noise < 2) throw std::invalid_argument("variance_decomposition: need M, L >= 2");
  if (values.rows() != static_cast<Eigen::Index>(m_weights) * l_noise || values.cols() < 1) {
    throw std::invalid_argument("variance_decomposition: tensor shape mismatch");
  }
  const int k = static_cast<int>(values.cols());
  VarianceDecomposition out;
  out.total.resize(k);
  out.epistemic.resize(k);
  out.aleatoric.resize(k);
  for (int j = 0; j < k; ++j) {
    VectorXd row_means(m_weights);
    double within = 0.0;
    for (int i = 0; i < m_weights; ++i) {
      auto block = values.col(j).segment(static_cast<Eigen::Index>(i) * l_noise, l_noise);
      double mu = block.mean();
      row_means[i] = mu;
      within += (block.array() - mu).square().sum();
    }
    double grand = row_means.mean();
    out.epistemic[j] = (row_means.array() - grand).square().sum() / m_weights;
    out.aleatoric[j] = within / (static_cast<double>(m_weights) * l_noise);
    out.total[j] = (values.col(j).array() - grand).square().sum() /
                   (static_cast<double>(m_weights) * l_noise);
  }
  return out;
}

VarianceDecomposition variance_decomposition(const PredictiveSamples& samples) {
  return variance_decomposition(samples.values, samples.m_weights, samples.l_noise);
}

double std_total(double var_epistemic, double var_aleatoric) {
  if (var_epistemic < 0.0 || var_aleatoric < 0.0) {
    throw std::invalid_argument("std_total: variances must be non-negative");
  }
  return std::sqrt(var_epistemic + var_aleatoric);
}

EntropyDecomposition entropy_decomposition(const PredictiveSamples& samples, int k) {
  const int m = samples.m_weights;
  const int l = samples.l_noise;
  if (k < 1 || k >= l) throw std::invalid_argument("entropy_decomposition: need 1 <= k < L");
  EntropyDecomposition out;
  out.total = knn_entropy(samples.values, k);
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    acc += knn_entropy(samples.values.middleRows(static_cast<Eigen::Index>(i) * l, l), k);
  }
  out.aleatoric = acc / static_cast<double>(m);
  out.mutual_information = out.total - out.aleatoric;
  return out;
}

UncertaintyReport decompose(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                            const VectorXd& x_star, const DecompositionConfig& cfg,
                            RngStream& rng) {
  cfg.validate();
  PredictiveSamples samples =
      sample_predictive(model, posterior, x_star, cfg.m_weights, cfg.l_noise, rng);
  EntropyDecomposition ent = entropy_decomposition(samples, cfg.k);
  VarianceDecomposition var = variance_decomposition(samples);
  UncertaintyReport report;
  report.entropy_total = ent.total;
  report.entropy_aleatoric = ent.aleatoric;
  report.mutual_information = ent.mutual_information;
  report.var_total = var.total;
  report.var_epistemic = var.epistemic;
  report.var_aleatoric = var.aleatoric;
  report.std_total = std::sqrt(var.total.sum());
  return report;
}

}  // namespace bnnlv::uncertainty
