#pragma once

#include <Eigen/Dense>
#include <functional>

#include "bnnlv/rng.hpp"

namespace test_helpers {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Central-difference oracle for gradients of scalar objectives.
inline VectorXd finite_difference(const std::function<double(const VectorXd&)>& f,
                                  const VectorXd& x, double h = 1e-5) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double orig = xp[i];
    xp[i] = orig + h;
    double up = f(xp);
    xp[i] = orig - h;
    double down = f(xp);
    xp[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Max over coordinates of |a-b| / max(1, |b|).
inline double max_scaled_error(const VectorXd& a, const VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

inline VectorXd random_vector(Eigen::Index n, bnnlv::RngStream& rng, double scale = 1.0) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, bnnlv::RngStream& rng,
                              double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

}  // namespace test_helpers
