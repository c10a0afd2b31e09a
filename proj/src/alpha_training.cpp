#include "bnnlv/alpha_training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bnnlv::inference {

using ad::Tape;
using ad::Var;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kVarianceFloor = 1e-12;

double inverse_softplus(double v) {
  // solves softplus(r) = v for v > 0
  return v > 30.0 ? v : std::log(std::expm1(v));
}

struct EnergyParts {
  Var energy;
  Var lme_row;  // 1 x B per-point data terms (unscaled)
};

// Builds the energy from variational-parameter Vars. v_w / v_z are variances
// (already positive). Batch may be empty, in which case only the weight KL
// contributes.
EnergyParts energy_on_tape(Tape& tape, const BnnLvModel& model, const Dataset& data,
                           const std::vector<int>& batch, Var m_w, Var v_w, Var m_z_b, Var v_z_b,
                           Var log_sigma, double alpha, const AlphaDraws& draws) {
  Var kl = ad::gauss_kl_sum(m_w, v_w, model.lambda_w);
  const int b = static_cast<int>(batch.size());
  if (b == 0) return {kl, Var{}};
  kl = ad::add(kl, ad::gauss_kl_sum(m_z_b, v_z_b, model.gamma_z));

  const int d = model.feature_dim();
  MatrixXd x_b(d, b);
  MatrixXd y_b(model.target_dim(), b);
  for (int i = 0; i < b; ++i) {
    x_b.col(i) = data.x.row(batch[static_cast<std::size_t>(i)]).transpose();
    y_b.col(i) = data.y.row(batch[static_cast<std::size_t>(i)]).transpose();
  }
  Var features = tape.constant(x_b);
  Var sd_w = ad::sqrt_(v_w);
  Var sd_z = ad::sqrt_(v_z_b);

  const int k_mc = static_cast<int>(draws.eps_w.size());
  std::vector<Var> ll_rows;
  ll_rows.reserve(static_cast<std::size_t>(k_mc));
  for (int k = 0; k < k_mc; ++k) {
    Var w_k = ad::add(m_w, ad::mul_const(sd_w, draws.eps_w[static_cast<std::size_t>(k)]));
    Var z_k = ad::add(m_z_b, ad::mul_const(sd_z, draws.eps_z.row(k).transpose()));
    Var inputs = ad::concat_rows({features, ad::reshape(z_k, 1, b)});
    Var pred = ad::dense_forward(model.net, w_k, inputs);
    ll_rows.push_back(ad::gauss_ll_cols(pred, y_b, log_sigma));
  }
  Var stack = ad::concat_rows(ll_rows);
  Var lme = ad::alpha_log_mean_exp(stack, alpha);
  double scale = -static_cast<double>(data.size()) / static_cast<double>(b);
  Var energy = ad::add(kl, ad::scale(ad::sum(lme), scale));
  return {energy, lme};
}

void check_batch(const Dataset& data, const std::vector<int>& batch) {
  for (int idx : batch) {
    if (idx < 0 || idx >= data.size()) throw std::invalid_argument("alpha_energy: batch index out of range");
  }
}

struct TapedPosterior {
  Var m_w, v_w, m_z_b, v_z_b, log_sigma;
};

TapedPosterior lift_posterior(Tape& tape, const FactorizedGaussianPosterior& q,
                              const std::vector<int>& batch) {
  const int b = static_cast<int>(batch.size());
  VectorXd m_z_b(b), v_z_b(b);
  for (int i = 0; i < b; ++i) {
    m_z_b[i] = q.m_z[batch[static_cast<std::size_t>(i)]];
    v_z_b[i] = q.v_z[batch[static_cast<std::size_t>(i)]];
  }
  return {tape.constant(q.m_w), tape.constant(q.v_w.cwiseMax(kVarianceFloor)),
          tape.constant(m_z_b), tape.constant(v_z_b.cwiseMax(kVarianceFloor)),
          tape.constant(q.noise_log_variance)};
}

}  // namespace

void AlphaTrainConfig::validate() const {
  if (alpha < 1e-6 || alpha > 1.0) throw std::invalid_argument("alpha must be in [1e-6, 1]");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (k_mc < 2) throw std::invalid_argument("need K_mc >= 2");
  if (minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
}

AlphaDraws make_draws(int k_mc, int param_count, int batch_size, RngStream& rng) {
  AlphaDraws draws;
  draws.eps_w.resize(static_cast<std::size_t>(k_mc));
  for (auto& e : draws.eps_w) {
    e.resize(param_count);
    for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = rng.normal();
  }
  draws.eps_z.resize(k_mc, std::max(batch_size, 0));
  for (Eigen::Index i = 0; i < draws.eps_z.rows(); ++i) {
    for (Eigen::Index j = 0; j < draws.eps_z.cols(); ++j) draws.eps_z(i, j) = rng.normal();
  }
  return draws;
}

double alpha_energy_with_draws(const BnnLvModel& model, const FactorizedGaussianPosterior& q,
                               const Dataset& data, const std::vector<int>& batch, double alpha,
                               const AlphaDraws& draws) {
  if (alpha < 1e-6) throw std::invalid_argument("alpha_energy: alpha must be >= 1e-6");
  check_batch(data, batch);
  Tape tape;
  TapedPosterior p = lift_posterior(tape, q, batch);
  EnergyParts parts =
      energy_on_tape(tape, model, data, batch, p.m_w, p.v_w, p.m_z_b, p.v_z_b, p.log_sigma, alpha, draws);
  double e = parts.energy.scalar();
  if (!std::isfinite(e)) {
    int offending = -1;
    if (parts.lme_row.tape != nullptr) {
      const MatrixXd& row = parts.lme_row.value();
      for (Eigen::Index i = 0; i < row.cols(); ++i) {
        if (!std::isfinite(row(0, i))) {
          offending = batch[static_cast<std::size_t>(i)];
          break;
        }
      }
    }
    throw std::runtime_error("alpha_energy: non-finite energy (datapoint " +
                             std::to_string(offending) + ")");
  }
  return e;
}

double alpha_energy(const BnnLvModel& model, const FactorizedGaussianPosterior& q,
                    const Dataset& data, const std::vector<int>& batch, double alpha, int k_mc,
                    RngStream& rng) {
  if (k_mc < 2) throw std::invalid_argument("alpha_energy: need K_mc >= 2");
  AlphaDraws draws = make_draws(k_mc, model.net.param_count(), static_cast<int>(batch.size()), rng);
  return alpha_energy_with_draws(model, q, data, batch, alpha, draws);
}

double negative_elbo_with_draws(const BnnLvModel& model, const FactorizedGaussianPosterior& q,
                                const Dataset& data, const std::vector<int>& batch,
                                const AlphaDraws& draws) {
  check_batch(data, batch);
  Tape tape;
  TapedPosterior p = lift_posterior(tape, q, batch);
  // Same construction with the data term averaged instead of alpha-weighted.
  Var kl = ad::gauss_kl_sum(p.m_w, p.v_w, model.lambda_w);
  const int b = static_cast<int>(batch.size());
  if (b == 0) return kl.scalar();
  kl = ad::add(kl, ad::gauss_kl_sum(p.m_z_b, p.v_z_b, model.gamma_z));
  MatrixXd x_b(model.feature_dim(), b), y_b(model.target_dim(), b);
  for (int i = 0; i < b; ++i) {
    x_b.col(i) = data.x.row(batch[static_cast<std::size_t>(i)]).transpose();
    y_b.col(i) = data.y.row(batch[static_cast<std::size_t>(i)]).transpose();
  }
  Var features = tape.constant(x_b);
  Var sd_w = ad::sqrt_(p.v_w);
  Var sd_z = ad::sqrt_(p.v_z_b);
  const int k_mc = static_cast<int>(draws.eps_w.size());
  Var acc = tape.constant(MatrixXd::Zero(1, 1));
  for (int k = 0; k < k_mc; ++k) {
    Var w_k = ad::add(p.m_w, ad::mul_const(sd_w, draws.eps_w[static_cast<std::size_t>(k)]));
    Var z_k = ad::add(p.m_z_b, ad::mul_const(sd_z, draws.eps_z.row(k).transpose()));
    Var inputs = ad::concat_rows({features, ad::reshape(z_k, 1, b)});
    Var pred = ad::dense_forward(model.net, w_k, inputs);
    acc = ad::add(acc, ad::sum(ad::gauss_ll_cols(pred, y_b, p.log_sigma)));
  }
  double scale = -static_cast<double>(data.size()) / (static_cast<double>(b) * k_mc);
  return ad::add(kl, ad::scale(acc, scale)).scalar();
}

namespace {

struct AdamState {
  VectorXd m1, m2;
  explicit AdamState(Eigen::Index n) : m1(VectorXd::Zero(n)), m2(VectorXd::Zero(n)) {}
};

void adam_update(VectorXd& param, AdamState& state, const VectorXd& grad, double lr, int t) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    state.m1[i] = b1 * state.m1[i] + (1.0 - b1) * grad[i];
    state.m2[i] = b2 * state.m2[i] + (1.0 - b2) * grad[i] * grad[i];
    param[i] -= lr * (state.m1[i] / c1) / (std::sqrt(state.m2[i] / c2) + eps);
  }
}

void adam_update_sparse(VectorXd& param, AdamState& state, const VectorXd& grad,
                        const std::vector<int>& indices, double lr, int t) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    int j = indices[i];
    double g = grad[static_cast<Eigen::Index>(i)];
    state.m1[j] = b1 * state.m1[j] + (1.0 - b1) * g;
    state.m2[j] = b2 * state.m2[j] + (1.0 - b2) * g * g;
    param[j] -= lr * (state.m1[j] / c1) / (std::sqrt(state.m2[j] / c2) + eps);
  }
}

}  // namespace

AlphaTrainResult train_alpha(const BnnLvModel& model, const Dataset& data,
                             const AlphaTrainConfig& cfg, RngStream& rng) {
  cfg.validate();
  data.validate();
  if (data.feature_dim() != model.feature_dim() || data.target_dim() != model.target_dim()) {
    throw std::invalid_argument("train_alpha: dataset shape does not match the model");
  }
  const int n = data.size();
  const int p_count = model.net.param_count();
  const int b = std::min(cfg.minibatch, n);

  VectorXd m_w(p_count);
  for (int i = 0; i < p_count; ++i) m_w[i] = 0.05 * rng.normal();
  VectorXd r_w = VectorXd::Constant(p_count, inverse_softplus(1e-4));
  VectorXd m_z = VectorXd::Zero(n);
  VectorXd r_z = VectorXd::Constant(n, inverse_softplus(model.gamma_z));
  VectorXd log_sigma = model.noise_variance.array().log();

  AdamState s_mw(p_count), s_rw(p_count), s_mz(n), s_rz(n), s_ls(log_sigma.size());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  const int steps_per_epoch = (n + b - 1) / b;

  AlphaTrainResult result;
  result.energy_trace.reserve(static_cast<std::size_t>(cfg.epochs));
  int t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's stream keeps epochs reproducible.
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    double epoch_energy = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      std::vector<int> batch;
      batch.reserve(static_cast<std::size_t>(b));
      for (int i = step * b; i < std::min(n, (step + 1) * b); ++i) batch.push_back(perm[i]);
      AlphaDraws draws = make_draws(cfg.k_mc, p_count, static_cast<int>(batch.size()), rng);

      Tape tape;
      Var v_mw = tape.input(m_w);
      Var v_rw = tape.input(r_w);
      VectorXd mz_b(batch.size()), rz_b(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        mz_b[static_cast<Eigen::Index>(i)] = m_z[batch[i]];
        rz_b[static_cast<Eigen::Index>(i)] = r_z[batch[i]];
      }
      Var v_mzb = tape.input(mz_b);
      Var v_rzb = tape.input(rz_b);
      Var v_ls = tape.input(log_sigma);
      Var v_vw = ad::add_scalar(ad::softplus(v_rw), kVarianceFloor);
      Var v_vz = ad::add_scalar(ad::softplus(v_rzb), kVarianceFloor);
      EnergyParts parts = energy_on_tape(tape, model, data, batch, v_mw, v_vw, v_mzb, v_vz, v_ls,
                                         cfg.alpha, draws);
      double e = parts.energy.scalar();
      if (!std::isfinite(e)) {
        throw std::runtime_error("train_alpha: non-finite energy at epoch " + std::to_string(epoch));
      }
      tape.backward(parts.energy);
      VectorXd g_mw = tape.grad(v_mw).reshaped();
      VectorXd g_rw = tape.grad(v_rw).reshaped();
      VectorXd g_mzb = tape.grad(v_mzb).reshaped();
      VectorXd g_rzb = tape.grad(v_rzb).reshaped();
      VectorXd g_ls = tape.grad(v_ls).reshaped();
      if (!g_mw.allFinite() || !g_rw.allFinite() || !g_mzb.allFinite() || !g_rzb.allFinite() ||
          !g_ls.allFinite()) {
        throw std::runtime_error("train_alpha: non-finite gradient at epoch " + std::to_string(epoch));
      }
      ++t;
      adam_update(m_w, s_mw, g_mw, cfg.learning_rate, t);
      adam_update(r_w, s_rw, g_rw, cfg.learning_rate, t);
      adam_update(log_sigma, s_ls, g_ls, cfg.learning_rate, t);
      adam_update_sparse(m_z, s_mz, g_mzb, batch, cfg.learning_rate, t);
      adam_update_sparse(r_z, s_rz, g_rzb, batch, cfg.learning_rate, t);
      epoch_energy += e;
    }
    result.energy_trace.push_back(epoch_energy / steps_per_epoch);
  }

  auto softplus_vec = [](const VectorXd& r) -> VectorXd {
    VectorXd v = r.unaryExpr(
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
    return (v.array() + kVarianceFloor).matrix();
  };
  result.posterior.m_w = std::move(m_w);
  result.posterior.v_w = softplus_vec(r_w);
  result.posterior.m_z = std::move(m_z);
  result.posterior.v_z = softplus_vec(r_z);
  result.posterior.noise_log_variance = std::move(log_sigma);
  return result;
}

}  // namespace bnnlv::inference
