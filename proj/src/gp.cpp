#include "bnnlv/gp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bnnlv::al {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

MatrixXd squared_distances(const MatrixXd& x) {
  VectorXd sq = x.rowwise().squaredNorm();
  MatrixXd d2 = sq.replicate(1, x.rows()) + sq.transpose().replicate(x.rows(), 1) -
                2.0 * x * x.transpose();
  return d2.cwiseMax(0.0);
}

struct Objective {
  double lml = -std::numeric_limits<double>::infinity();
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();  // d/d(log ell, log s2, log n2)
  bool ok = false;
};

// Log marginal likelihood and its gradient; theta = (log ell, log s2, log n2).
Objective evaluate(const MatrixXd& d2, const VectorXd& y, const Eigen::Vector3d& theta) {
  Objective out;
  const double ell2 = std::exp(2.0 * theta[0]);
  const double s2 = std::exp(theta[1]);
  const double n2 = std::exp(theta[2]);
  const Eigen::Index n = y.size();
  MatrixXd k_rbf = (-(d2.array() / (2.0 * ell2))).exp().matrix() * s2;
  MatrixXd k = k_rbf;
  k.diagonal().array() += n2;
  double jitter = 1e-8;
  Eigen::LLT<MatrixXd> chol(k);
  while (chol.info() != Eigen::Success && jitter <= 1e-4) {
    MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    chol.compute(kj);
    jitter *= 10.0;
  }
  if (chol.info() != Eigen::Success) return out;
  VectorXd alpha = chol.solve(y);
  double log_det = 2.0 * chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
  out.lml = -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * n * kLogTwoPi;
  MatrixXd k_inv = chol.solve(MatrixXd::Identity(n, n));
  MatrixXd outer = alpha * alpha.transpose() - k_inv;
  // dK/dlog ell = K_rbf .* d2/ell^2 ; dK/dlog s2 = K_rbf ; dK/dlog n2 = n2 I.
  out.grad[0] = 0.5 * (outer.cwiseProduct(k_rbf.cwiseProduct(d2 / ell2))).sum();
  out.grad[1] = 0.5 * (outer.cwiseProduct(k_rbf)).sum();
  out.grad[2] = 0.5 * n2 * outer.trace();
  out.ok = true;
  return out;
}

}  // namespace

GpRegressor GpRegressor::fit(const MatrixXd& x, const VectorXd& y, const FitOptions& options,
                             RngStream& rng) {
  if (x.rows() != y.size()) throw std::invalid_argument("gp: X/y size mismatch");
  if (x.rows() < 2) throw std::invalid_argument("gp: need at least two training points");

  MatrixXd d2 = squared_distances(x);
  double y_mean = y.mean();
  VectorXd yc = y.array() - y_mean;
  double y_var = std::max(yc.squaredNorm() / static_cast<double>(y.size()), 1e-8);
  // Median pairwise distance sets the lengthscale scale.
  std::vector<double> dist;
  dist.reserve(256);
  RngStream med_rng = rng.derive(0);
  for (int i = 0; i < 256; ++i) {
    int a = med_rng.uniform_int(static_cast<int>(x.rows()));
    int b = med_rng.uniform_int(static_cast<int>(x.rows()));
    if (a != b) dist.push_back(std::sqrt(d2(a, b)));
  }
  std::sort(dist.begin(), dist.end());
  double med = dist.empty() ? 1.0 : std::max(dist[dist.size() / 2], 1e-3);

  Eigen::Vector3d best_theta;
  double best_lml = -std::numeric_limits<double>::infinity();
  bool any_ok = false;
  for (int restart = 0; restart < options.restarts; ++restart) {
    RngStream r = rng.derive(100 + static_cast<std::uint64_t>(restart));
    Eigen::Vector3d theta(std::log(med) + 0.5 * r.normal(),
                          std::log(y_var) + 0.5 * r.normal(),
                          std::log(0.1 * y_var) + 0.5 * r.normal());
    Eigen::Vector3d m1 = Eigen::Vector3d::Zero(), m2 = Eigen::Vector3d::Zero();
    Eigen::Vector3d current = theta;
    double current_lml = -std::numeric_limits<double>::infinity();
    for (int step = 0; step < options.opt_steps; ++step) {
      Objective obj = evaluate(d2, yc, current);
      if (!obj.ok) break;
      current_lml = obj.lml;
      double c1 = 1.0 - std::pow(0.9, step + 1), c2 = 1.0 - std::pow(0.999, step + 1);
      for (int j = 0; j < 3; ++j) {
        m1[j] = 0.9 * m1[j] + 0.1 * obj.grad[j];
        m2[j] = 0.999 * m2[j] + 0.001 * obj.grad[j] * obj.grad[j];
        current[j] += options.learning_rate * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + 1e-8);
      }
    }
    Objective final_obj = evaluate(d2, yc, current);
    double lml = final_obj.ok ? final_obj.lml : current_lml;
    Eigen::Vector3d cand = final_obj.ok ? current : theta;
    if (lml > best_lml) {
      best_lml = lml;
      best_theta = cand;
      any_ok = true;
    }
  }
  if (!any_ok) throw std::runtime_error("gp: marginal-likelihood optimization failed on all restarts");

  GpRegressor gp;
  gp.x_ = x;
  gp.y_mean_ = y_mean;
  gp.lengthscale_ = std::exp(best_theta[0]);
  gp.signal_var_ = std::exp(best_theta[1]);
  gp.noise_var_ = std::exp(best_theta[2]);
  gp.lml_ = best_lml;
  MatrixXd k = (-(d2.array() / (2.0 * gp.lengthscale_ * gp.lengthscale_))).exp().matrix() * gp.signal_var_;
  k.diagonal().array() += gp.noise_var_;
  double jitter = 1e-8;
  gp.chol_.compute(k);
  while (gp.chol_.info() != Eigen::Success && jitter <= 1e-4) {
    MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    gp.chol_.compute(kj);
    jitter *= 10.0;
  }
  if (gp.chol_.info() != Eigen::Success) throw std::runtime_error("gp: Cholesky failed despite jitter");
  gp.alpha_ = gp.chol_.solve(yc);
  return gp;
}

VectorXd GpRegressor::kernel_vector(const VectorXd& x) const {
  VectorXd k(x_.rows());
  const double inv = 1.0 / (2.0 * lengthscale_ * lengthscale_);
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    k[i] = signal_var_ * std::exp(-(x_.row(i).transpose() - x).squaredNorm() * inv);
  }
  return k;
}

double GpRegressor::predict_mean(const VectorXd& x) const {
  return y_mean_ + kernel_vector(x).dot(alpha_);
}

double GpRegressor::predict_variance(const VectorXd& x) const {
  VectorXd k = kernel_vector(x);
  VectorXd v = chol_.solve(k);
  double var = signal_var_ + noise_var_ - k.dot(v);
  return std::max(var, 1e-12);
}

double GpRegressor::log_likelihood(const VectorXd& x, double y) const {
  double mu = predict_mean(x);
  double var = predict_variance(x);
  double r = y - mu;
  return -0.5 * (kLogTwoPi + std::log(var)) - r * r / (2.0 * var);
}

double GpRegressor::predictive_entropy(const VectorXd& x) const {
  return 0.5 * std::log(2.0 * M_PI * M_E * predict_variance(x));
}

}  // namespace bnnlv::al
