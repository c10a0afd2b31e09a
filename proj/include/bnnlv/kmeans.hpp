#pragma once

#include <Eigen/Dense>

#include "bnnlv/rng.hpp"

namespace bnnlv::policy {

// Lloyd's algorithm on row-vector points; best of `restarts` runs by
// within-cluster sum of squares. Centroid count is capped at the number of
// distinct starting points.
Eigen::MatrixXd kmeans_fit(const Eigen::MatrixXd& points, int k, int iterations, int restarts,
                           RngStream& rng);

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& point);
double nearest_centroid_distance(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& point);

}  // namespace bnnlv::policy
