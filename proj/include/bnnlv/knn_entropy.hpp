#pragma once

#include <Eigen/Dense>

namespace bnnlv::uncertainty {

double digamma(double x);

// Kozachenko-Leonenko differential entropy estimate in nats from k-th
// nearest-neighbor Euclidean distances:
//   psi(n) - psi(k) + ln c_d + (d/n) * sum_i ln rho_{i,k}.
// Samples are n x d. Near-duplicate points are broken up with a deterministic
// N(0, 1e-20) jitter; a fully degenerate sample returns -infinity as a
// sentinel. Neighbor search is exact (sorting in 1-D, a k-d tree otherwise).
double knn_entropy(const Eigen::MatrixXd& samples, int k);

// Exact k-th nearest-neighbor distances for every point (self excluded),
// exposed for estimator tests.
Eigen::VectorXd kth_neighbor_distances(const Eigen::MatrixXd& samples, int k);

}  // namespace bnnlv::uncertainty
