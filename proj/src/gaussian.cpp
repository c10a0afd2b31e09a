#include "bnnlv/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace bnnlv {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
}

double gaussian_log_pdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                        const Eigen::VectorXd& variance) {
  if (y.size() != mean.size() || y.size() != variance.size()) {
    throw std::invalid_argument("gaussian_log_pdf: length mismatch");
  }
  if ((variance.array() <= 0.0).any()) {
    throw std::invalid_argument("gaussian_log_pdf: variance must be positive");
  }
  return (-0.5 * (kLogTwoPi + variance.array().log()) -
          (y.array() - mean.array()).square() / (2.0 * variance.array()))
      .sum();
}

double gaussian_log_pdf_scalar(double y, double mean, double variance) {
  if (variance <= 0.0) throw std::invalid_argument("gaussian_log_pdf: variance must be positive");
  double r = y - mean;
  return -0.5 * (kLogTwoPi + std::log(variance)) - r * r / (2.0 * variance);
}

double log_mean_exp(const Eigen::VectorXd& x) {
  if (x.size() == 0) throw std::invalid_argument("log_mean_exp: empty input");
  double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum() / static_cast<double>(x.size()));
}

}  // namespace bnnlv
