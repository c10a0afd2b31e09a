#include "bnnlv/kmeans.hpp"

#include <limits>
#include <stdexcept>
#include <vector>

namespace bnnlv::policy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double lloyd(const MatrixXd& points, MatrixXd& centroids, int iterations) {
  const Eigen::Index n = points.rows();
  const Eigen::Index k = centroids.rows();
  std::vector<int> assignment(static_cast<std::size_t>(n), 0);
  double wcss = 0.0;
  for (int it = 0; it < iterations; ++it) {
    wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (Eigen::Index c = 0; c < k; ++c) {
        double d = (points.row(i) - centroids.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          arg = static_cast<int>(c);
        }
      }
      assignment[static_cast<std::size_t>(i)] = arg;
      wcss += best;
    }
    MatrixXd sums = MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assignment[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      }
    }
  }
  return wcss;
}

}  // namespace

MatrixXd kmeans_fit(const MatrixXd& points, int k, int iterations, int restarts, RngStream& rng) {
  if (points.rows() < 1) throw std::invalid_argument("kmeans: empty batch");
  if (k < 1) throw std::invalid_argument("kmeans: need k >= 1");
  k = std::min<int>(k, static_cast<int>(points.rows()));

  MatrixXd best;
  double best_wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    MatrixXd centroids(k, points.cols());
    for (int c = 0; c < k; ++c) {
      centroids.row(c) = points.row(rng.uniform_int(static_cast<int>(points.rows())));
    }
    double wcss = lloyd(points, centroids, iterations);
    if (wcss < best_wcss) {
      best_wcss = wcss;
      best = std::move(centroids);
    }
  }
  return best;
}

int nearest_centroid(const MatrixXd& centroids, const VectorXd& point) {
  if (centroids.rows() < 1) throw std::invalid_argument("nearest_centroid: no centroids");
  int arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    double d = (centroids.row(c).transpose() - point).squaredNorm();
    if (d < best) {
      best = d;
      arg = static_cast<int>(c);
    }
  }
  return arg;
}

double nearest_centroid_distance(const MatrixXd& centroids, const VectorXd& point) {
  int c = nearest_centroid(centroids, point);
  return (centroids.row(c).transpose() - point).norm();
}

}  // namespace bnnlv::policy
