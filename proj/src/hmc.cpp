#include "bnnlv/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bnnlv/autodiff.hpp"

namespace bnnlv::inference {

void HmcConfig::validate() const {
  if (kept < 1) throw std::invalid_argument("hmc: need kept >= 1");
  if (thin < 1) throw std::invalid_argument("hmc: need thin >= 1");
  if (burn_in < 0) throw std::invalid_argument("hmc: burn_in must be non-negative");
  if (leapfrog_steps < 1) throw std::invalid_argument("hmc: need at least one leapfrog step");
  if (target_acceptance <= 0.0 || target_acceptance >= 1.0) {
    throw std::invalid_argument("hmc: target acceptance must be in (0, 1)");
  }
}

std::pair<VectorXd, VectorXd> leapfrog(const LogDensityFn& target, VectorXd q, VectorXd p,
                                       double eps, int steps) {
  p += 0.5 * eps * target(q).second;
  for (int s = 0; s < steps; ++s) {
    q += eps * p;
    p += (s + 1 < steps ? eps : 0.5 * eps) * target(q).second;
  }
  return {std::move(q), std::move(p)};
}

HmcResult hmc(const LogDensityFn& target, VectorXd init, const HmcConfig& cfg, RngStream& rng) {
  cfg.validate();
  const int dim = static_cast<int>(init.size());
  double eps = cfg.step_size > 0.0 ? cfg.step_size : 0.1 / std::sqrt(static_cast<double>(dim));
  const bool adapt = cfg.step_size <= 0.0;

  HmcResult result;
  result.samples.reserve(static_cast<std::size_t>(cfg.kept / cfg.thin) + 1);
  VectorXd q = std::move(init);
  auto [log_p, grad] = target(q);
  if (!std::isfinite(log_p)) throw std::invalid_argument("hmc: initial position has non-finite density");

  const int total = cfg.burn_in + cfg.kept;
  int accepted_sampling = 0, accepted_recent = 0, recent = 0;
  int consecutive_divergences = 0;
  VectorXd p(dim), q_new(dim), p_new(dim), grad_new(dim);

  // Trajectory lengths are jittered over [ceil(L/2), L] to avoid resonant
  // near-periodic orbits.
  const int min_steps = std::max(1, (cfg.leapfrog_steps + 1) / 2);

  for (int iter = 0; iter < total; ++iter) {
    for (int i = 0; i < dim; ++i) p[i] = rng.normal();
    double h0 = -log_p + 0.5 * p.squaredNorm();
    const int steps = min_steps + rng.uniform_int(cfg.leapfrog_steps - min_steps + 1);

    q_new = q;
    p_new = p + 0.5 * eps * grad;
    bool divergent = false;
    double log_p_new = 0.0;
    for (int s = 0; s < steps; ++s) {
      q_new += eps * p_new;
      auto vg = target(q_new);
      if (!std::isfinite(vg.first)) {
        divergent = true;
        break;
      }
      p_new += (s + 1 < steps ? eps : 0.5 * eps) * vg.second;
      log_p_new = vg.first;
      grad_new = std::move(vg.second);
    }

    double accept_prob = 0.0;
    if (!divergent) {
      double h1 = -log_p_new + 0.5 * p_new.squaredNorm();
      divergent = !std::isfinite(h1);
      if (!divergent) accept_prob = std::min(1.0, std::exp(h0 - h1));
    }

    if (divergent) {
      ++result.divergences;
      ++consecutive_divergences;
      eps *= 0.5;
      if (consecutive_divergences > 50) {
        throw std::runtime_error("hmc: persistent divergence, step size collapsed to " +
                                 std::to_string(eps));
      }
    } else {
      consecutive_divergences = 0;
      if (rng.uniform01() < accept_prob) {
        std::swap(q, q_new);
        log_p = log_p_new;
        std::swap(grad, grad_new);
        if (iter >= cfg.burn_in) ++accepted_sampling;
        ++accepted_recent;
      }
      if (adapt && iter < cfg.burn_in) {
        eps *= std::exp(0.02 * (accept_prob - cfg.target_acceptance));
      }
    }
    ++recent;
    if (recent == 200) {
      result.trace.emplace_back(iter + 1, static_cast<double>(accepted_recent) / recent);
      recent = 0;
      accepted_recent = 0;
    }

    if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0) {
      result.samples.push_back(q);
    }
  }
  result.acceptance_rate = static_cast<double>(accepted_sampling) / cfg.kept;
  result.step_size = eps;
  return result;
}

std::pair<double, VectorXd> bnnlv_hmc_target(const BnnLvModel& model, const Dataset& data,
                                             const VectorXd& position) {
  const int p_count = model.net.param_count();
  const int n = data.size();
  const int k = model.target_dim();
  if (position.size() != p_count + n + k) throw std::invalid_argument("hmc target: position size mismatch");

  ad::Tape tape;
  ad::Var w = tape.input(position.head(p_count));
  ad::Var z = tape.input(position.segment(p_count, n));
  ad::Var log_sigma = tape.input(position.tail(k));

  ad::Var inputs = ad::concat_rows({tape.constant(data.x.transpose()), ad::reshape(z, 1, n)});
  ad::Var pred = ad::dense_forward(model.net, w, inputs);
  ad::Var ll = ad::sum(ad::gauss_ll_cols(pred, data.y.transpose(), log_sigma));

  // Priors; additive constants that do not involve the position are dropped.
  ad::Var w_prior = ad::scale(ad::sum_sq(w), -0.5 / model.lambda_w);
  ad::Var z_prior = ad::scale(ad::sum_sq(z), -0.5 / model.gamma_z);
  ad::Var ls_prior = ad::scale(ad::sum_sq(ad::add_scalar(log_sigma, -std::log(0.1))), -0.5);
  ad::Var total = ad::add(ad::add(ll, w_prior), ad::add(z_prior, ls_prior));

  double value = total.scalar();
  if (!std::isfinite(value)) {
    return {value, VectorXd::Zero(position.size())};
  }
  tape.backward(total);
  VectorXd grad(position.size());
  grad.head(p_count) = tape.grad(w).reshaped();
  grad.segment(p_count, n) = tape.grad(z).reshaped();
  grad.tail(k) = tape.grad(log_sigma).reshaped();
  return {value, std::move(grad)};
}

PosteriorEnsemble hmc_sample(const BnnLvModel& model, const Dataset& data, const HmcConfig& cfg,
                             RngStream& rng, HmcResult* diagnostics) {
  data.validate();
  const int p_count = model.net.param_count();
  const int n = data.size();
  const int k = model.target_dim();

  auto target = [&model, &data](const VectorXd& position) {
    return bnnlv_hmc_target(model, data, position);
  };

  VectorXd init(p_count + n + k);
  for (int i = 0; i < p_count; ++i) init[i] = 0.05 * rng.normal();
  init.segment(p_count, n).setZero();
  init.tail(k).setConstant(std::log(0.1));

  HmcResult res = hmc(target, std::move(init), cfg, rng);

  PosteriorEnsemble ensemble;
  ensemble.provenance = PosteriorEnsemble::Provenance::hmc;
  ensemble.weight_samples.reserve(res.samples.size());
  ensemble.noise_variances.reserve(res.samples.size());
  for (const VectorXd& q : res.samples) {
    ensemble.weight_samples.push_back(q.head(p_count));
    ensemble.noise_variances.push_back(q.tail(k).array().exp());
  }
  if (diagnostics) {
    diagnostics->acceptance_rate = res.acceptance_rate;
    diagnostics->step_size = res.step_size;
    diagnostics->divergences = res.divergences;
    diagnostics->trace = std::move(res.trace);
  }
  return ensemble;
}

}  // namespace bnnlv::inference
