#pragma once

#include <Eigen/Dense>

namespace bnnlv {

// Diagonal-Gaussian log density: sum_k [ -0.5 log(2 pi v_k) - (y_k - m_k)^2 / (2 v_k) ].
double gaussian_log_pdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                        const Eigen::VectorXd& variance);

double gaussian_log_pdf_scalar(double y, double mean, double variance);

// log( (1/n) * sum_i exp(x_i) ), stable.
double log_mean_exp(const Eigen::VectorXd& x);

}  // namespace bnnlv
