#pragma once

#include <Eigen/Dense>

#include "bnnlv/rng.hpp"

namespace bnnlv::al {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Exact GP regression with an isotropic RBF kernel plus observation noise.
// Hyperparameters (log lengthscale, log signal variance, log noise variance)
// maximize the log marginal likelihood by gradient ascent from 3 restarts.
class GpRegressor {
 public:
  struct FitOptions {
    int restarts = 3;
    int opt_steps = 40;
    double learning_rate = 0.1;
  };

  static GpRegressor fit(const MatrixXd& x, const VectorXd& y, const FitOptions& options,
                         RngStream& rng);

  double predict_mean(const VectorXd& x) const;
  double predict_variance(const VectorXd& x) const;  // of y (includes noise)
  double log_likelihood(const VectorXd& x, double y) const;
  // Predictive entropy of y at x, 0.5 ln(2 pi e sigma^2).
  double predictive_entropy(const VectorXd& x) const;

  double lengthscale() const { return lengthscale_; }
  double signal_variance() const { return signal_var_; }
  double noise_variance() const { return noise_var_; }
  double log_marginal_likelihood() const { return lml_; }

 private:
  MatrixXd x_;
  VectorXd alpha_;
  Eigen::LLT<MatrixXd> chol_;
  double y_mean_ = 0.0;
  double lengthscale_ = 1.0, signal_var_ = 1.0, noise_var_ = 0.1;
  double lml_ = 0.0;

  VectorXd kernel_vector(const VectorXd& x) const;
};

}  // namespace bnnlv::al
