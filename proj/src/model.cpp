#include "bnnlv/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bnnlv/gaussian.hpp"

namespace bnnlv {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kVarianceFloor = 1e-12;
}  // namespace

void Dataset::validate() const {
  if (x.rows() < 1) throw std::invalid_argument("Dataset: need at least one point");
  if (x.rows() != y.rows()) throw std::invalid_argument("Dataset: X and Y row mismatch");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("Dataset: non-finite entries");
}

BnnLvModel::BnnLvModel(nn::DenseNet network, double gamma_z_, double lambda_w_, VectorXd noise_variance_)
    : net(std::move(network)), gamma_z(gamma_z_), lambda_w(lambda_w_), noise_variance(std::move(noise_variance_)) {
  if (net.num_hidden_layers() < 1) throw std::invalid_argument("BnnLvModel: need at least one hidden layer");
  if (net.input_size() < 2) throw std::invalid_argument("BnnLvModel: input must hold features plus the latent");
  if (gamma_z <= 0.0) throw std::invalid_argument("BnnLvModel: gamma_z must be positive");
  if (lambda_w <= 0.0) throw std::invalid_argument("BnnLvModel: lambda_w must be positive");
  if (noise_variance.size() != net.output_size() || (noise_variance.array() <= 0.0).any()) {
    throw std::invalid_argument("BnnLvModel: need one positive noise variance per output");
  }
}

BnnLvModel BnnLvModel::make(int feature_dim, const std::vector<int>& hidden, int target_dim,
                            double gamma_z, double lambda_w, double noise_var) {
  std::vector<int> sizes;
  sizes.push_back(feature_dim + 1);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(target_dim);
  return BnnLvModel(nn::DenseNet(sizes), gamma_z, lambda_w,
                    VectorXd::Constant(target_dim, noise_var));
}

void FactorizedGaussianPosterior::validate(const BnnLvModel& model, int n_data) const {
  if (m_w.size() != model.net.param_count() || v_w.size() != m_w.size()) {
    throw std::invalid_argument("posterior: weight factor count mismatch");
  }
  if (m_z.size() != n_data || v_z.size() != n_data) {
    throw std::invalid_argument("posterior: latent factor count must equal the training set size");
  }
  if ((v_w.array() <= 0.0).any() || (v_z.array() <= 0.0).any()) {
    throw std::invalid_argument("posterior: variances must be positive");
  }
  if (noise_log_variance.size() != model.target_dim()) {
    throw std::invalid_argument("posterior: need one noise log-variance per output");
  }
}

const VectorXd& PosteriorEnsemble::noise_for(const BnnLvModel& model, int i) const {
  if (!noise_variances.empty()) return noise_variances[static_cast<std::size_t>(i)];
  return model.noise_variance;
}

void PosteriorEnsemble::validate(const BnnLvModel& model) const {
  if (weight_samples.empty()) throw std::invalid_argument("ensemble: empty");
  for (const auto& w : weight_samples) {
    if (w.size() != model.net.param_count()) throw std::invalid_argument("ensemble: sample length mismatch");
    if (!w.allFinite()) throw std::invalid_argument("ensemble: non-finite sample");
  }
  if (!noise_variances.empty() && noise_variances.size() != weight_samples.size()) {
    throw std::invalid_argument("ensemble: noise sample count mismatch");
  }
}

double log_joint(const BnnLvModel& model, const VectorXd& params, const VectorXd& z,
                 const Dataset& data) {
  nn::check_params(model.net, params);
  if (z.size() != data.x.rows()) throw std::invalid_argument("log_joint: z length must equal N");
  const int n = data.size();
  double total = 0.0;
  if (n > 0) {
    if (data.feature_dim() != model.feature_dim() || data.target_dim() != model.target_dim()) {
      throw std::invalid_argument("log_joint: dataset shape does not match the model");
    }
    MatrixXd inputs(model.net.input_size(), n);
    inputs.topRows(model.feature_dim()) = data.x.transpose();
    inputs.row(model.feature_dim()) = z.transpose();
    MatrixXd pred = nn::forward_batch(model.net, params, inputs);
    VectorXd inv_var = model.noise_variance.cwiseInverse();
    double log_det = model.noise_variance.array().log().sum();
    MatrixXd resid = data.y.transpose() - pred;
    total += -0.5 * n * (model.target_dim() * kLogTwoPi + log_det);
    total += -0.5 * (inv_var.transpose() * resid.array().square().matrix()).sum();
  }
  // Priors over weights and latents.
  double p = static_cast<double>(params.size());
  total += -0.5 * (p * (kLogTwoPi + std::log(model.lambda_w)) + params.squaredNorm() / model.lambda_w);
  double nz = static_cast<double>(z.size());
  total += -0.5 * (nz * (kLogTwoPi + std::log(model.gamma_z)) + z.squaredNorm() / model.gamma_z);
  return total;
}

PredictiveSamples sample_predictive(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                                    const VectorXd& x_star, int m_weights, int l_noise,
                                    RngStream& rng) {
  posterior.validate(model);
  if (m_weights < 1 || m_weights > posterior.size()) {
    throw std::invalid_argument("sample_predictive: need 1 <= M <= ensemble size");
  }
  if (l_noise < 2) throw std::invalid_argument("sample_predictive: need L >= 2");
  if (x_star.size() != model.feature_dim()) {
    throw std::invalid_argument("sample_predictive: query size mismatch");
  }
  std::vector<int> chosen(static_cast<std::size_t>(m_weights));
  if (m_weights == posterior.size()) {
    for (int i = 0; i < m_weights; ++i) chosen[i] = i;
  } else {
    for (int i = 0; i < m_weights; ++i) chosen[i] = rng.uniform_int(posterior.size());
  }
  const int k = model.target_dim();
  const double z_std = std::sqrt(std::max(model.gamma_z, kVarianceFloor));
  PredictiveSamples out;
  out.m_weights = m_weights;
  out.l_noise = l_noise;
  out.values.resize(static_cast<Eigen::Index>(m_weights) * l_noise, k);
  MatrixXd inputs(model.net.input_size(), l_noise);
  inputs.topRows(model.feature_dim()).colwise() = x_star;
  for (int i = 0; i < m_weights; ++i) {
    for (int l = 0; l < l_noise; ++l) inputs(model.feature_dim(), l) = z_std * rng.normal();
    MatrixXd pred = nn::forward_batch(model.net, posterior.weight_samples[chosen[i]], inputs);
    const VectorXd& sigma = posterior.noise_for(model, chosen[i]);
    for (int l = 0; l < l_noise; ++l) {
      for (int j = 0; j < k; ++j) {
        out.values(static_cast<Eigen::Index>(i) * l_noise + l, j) =
            pred(j, l) + std::sqrt(std::max(sigma[j], kVarianceFloor)) * rng.normal();
      }
    }
  }
  return out;
}

PosteriorEnsemble posterior_to_ensemble(const BnnLvModel& model,
                                        const FactorizedGaussianPosterior& q, int m_weights,
                                        RngStream& rng) {
  if (m_weights < 1) throw std::invalid_argument("posterior_to_ensemble: need M >= 1");
  if (q.m_w.size() != model.net.param_count()) {
    throw std::invalid_argument("posterior_to_ensemble: posterior does not match the model");
  }
  PosteriorEnsemble out;
  out.provenance = PosteriorEnsemble::Provenance::variational;
  out.weight_samples.reserve(static_cast<std::size_t>(m_weights));
  VectorXd stddev = q.v_w.cwiseMax(kVarianceFloor).cwiseSqrt();
  VectorXd sigma = q.noise_log_variance.array().exp();
  for (int i = 0; i < m_weights; ++i) {
    VectorXd w(q.m_w.size());
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = q.m_w[j] + stddev[j] * rng.normal();
    out.weight_samples.push_back(std::move(w));
    out.noise_variances.push_back(sigma);
  }
  return out;
}

double test_log_likelihood(const BnnLvModel& model, const PosteriorEnsemble& posterior,
                           const Dataset& test, int samples_per_point, RngStream& rng) {
  posterior.validate(model);
  test.validate();
  if (samples_per_point < 1) throw std::invalid_argument("test_log_likelihood: need S >= 1");
  const int n = test.size();
  const int s = samples_per_point;
  const double z_std = std::sqrt(std::max(model.gamma_z, kVarianceFloor));
  MatrixXd ll(s, n);
  MatrixXd inputs(model.net.input_size(), n);
  for (int si = 0; si < s; ++si) {
    int wi = (s == posterior.size()) ? si : rng.uniform_int(posterior.size());
    inputs.topRows(model.feature_dim()) = test.x.transpose();
    for (int j = 0; j < n; ++j) inputs(model.feature_dim(), j) = z_std * rng.normal();
    MatrixXd pred = nn::forward_batch(model.net, posterior.weight_samples[wi], inputs);
    const VectorXd& sigma = posterior.noise_for(model, wi);
    VectorXd inv_var = sigma.cwiseMax(kVarianceFloor).cwiseInverse();
    double log_det = sigma.cwiseMax(kVarianceFloor).array().log().sum();
    for (int j = 0; j < n; ++j) {
      double quad = (test.y.row(j).transpose() - pred.col(j)).array().square().matrix().dot(inv_var);
      ll(si, j) = -0.5 * (model.target_dim() * kLogTwoPi + log_det + quad);
    }
  }
  double acc = 0.0;
  for (int j = 0; j < n; ++j) acc += log_mean_exp(ll.col(j));
  return acc / static_cast<double>(n);
}

}  // namespace bnnlv
