#include "bnnlv/knn_entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "bnnlv/rng.hpp"

namespace bnnlv::uncertainty {

double digamma(double x) {
  if (x <= 0.0) throw std::invalid_argument("digamma: need x > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x, inv2 = inv * inv;
  return acc + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// k-th NN distances in one dimension by a sorted-window sweep.
VectorXd kth_distances_1d(const VectorXd& v, int k) {
  const int n = static_cast<int>(v.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
  VectorXd out(n);
  for (int p = 0; p < n; ++p) {
    double x = v[order[p]];
    int l = p - 1, r = p + 1;
    double dist = 0.0;
    for (int taken = 0; taken < k; ++taken) {
      double dl = (l >= 0) ? x - v[order[l]] : std::numeric_limits<double>::infinity();
      double dr = (r < n) ? v[order[r]] - x : std::numeric_limits<double>::infinity();
      if (dl <= dr) {
        dist = dl;
        --l;
      } else {
        dist = dr;
        ++r;
      }
    }
    out[order[p]] = dist;
  }
  return out;
}

// Minimal exact k-d tree over row-vector points, used for d >= 2.
class KdTree {
 public:
  KdTree(const MatrixXd& pts) : pts_(pts), index_(static_cast<std::size_t>(pts.rows())) {
    std::iota(index_.begin(), index_.end(), 0);
    nodes_.reserve(index_.size() * 2);
    root_ = build(0, static_cast<int>(index_.size()));
  }

  // Largest of the k smallest distances to other points (self excluded).
  double kth_distance(int query, int k) const {
    heap_.clear();
    search(root_, query, k);
    return std::sqrt(heap_.front());
  }

 private:
  struct Node {
    int split_dim = -1;
    double split_val = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range in index_
  };

  int build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= 16) {
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    // Split the widest dimension at the median.
    int dim = 0;
    double best_spread = -1.0;
    for (int d = 0; d < pts_.cols(); ++d) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int i = begin; i < end; ++i) {
        double v = pts_(index_[i], d);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        dim = d;
      }
    }
    int mid = (begin + end) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](int a, int b) { return pts_(a, dim) < pts_(b, dim); });
    node.split_dim = dim;
    node.split_val = pts_(index_[mid], dim);
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void push_heap_bounded(double d2, int k) const {
    if (static_cast<int>(heap_.size()) < k) {
      heap_.push_back(d2);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (d2 < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = d2;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  void search(int node_id, int query, int k) const {
    const Node& node = nodes_[node_id];
    if (node.split_dim < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        int j = index_[i];
        if (j == query) continue;
        double d2 = (pts_.row(j) - pts_.row(query)).squaredNorm();
        push_heap_bounded(d2, k);
      }
      return;
    }
    double delta = pts_(query, node.split_dim) - node.split_val;
    int near = delta < 0.0 ? node.left : node.right;
    int far = delta < 0.0 ? node.right : node.left;
    search(near, query, k);
    if (static_cast<int>(heap_.size()) < k || delta * delta <= heap_.front()) {
      search(far, query, k);
    }
  }

  const MatrixXd& pts_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
  mutable std::vector<double> heap_;
};

MatrixXd jittered(const MatrixXd& samples) {
  // Deterministic tie-breaking jitter; scale 1e-10 stddev.
  RngStream rng(0x6a69747465724c4bULL);
  MatrixXd out = samples;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += 1e-10 * rng.normal();
  }
  return out;
}

}  // namespace

Eigen::VectorXd kth_neighbor_distances(const Eigen::MatrixXd& samples, int k) {
  const int n = static_cast<int>(samples.rows());
  if (n <= k) throw std::invalid_argument("kth_neighbor_distances: need n > k");
  if (samples.cols() == 1) return kth_distances_1d(samples.col(0), k);
  KdTree tree(samples);
  VectorXd out(n);
  for (int i = 0; i < n; ++i) out[i] = tree.kth_distance(i, k);
  return out;
}

double knn_entropy(const Eigen::MatrixXd& samples, int k) {
  const int n = static_cast<int>(samples.rows());
  const int d = static_cast<int>(samples.cols());
  if (d < 1) throw std::invalid_argument("knn_entropy: need d >= 1");
  if (k < 1) throw std::invalid_argument("knn_entropy: need k >= 1");
  if (n <= k) throw std::invalid_argument("knn_entropy: need n > k");
  bool degenerate = true;
  for (int j = 0; j < d && degenerate; ++j) {
    if (samples.col(j).maxCoeff() != samples.col(j).minCoeff()) degenerate = false;
  }
  if (degenerate) return -std::numeric_limits<double>::infinity();

  MatrixXd pts = jittered(samples);
  VectorXd rho = kth_neighbor_distances(pts, k);
  // Unit-ball volume c_d = pi^{d/2} / Gamma(d/2 + 1).
  double log_cd = 0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d + 1.0);
  double log_sum = rho.array().max(1e-300).log().sum();
  return digamma(n) - digamma(k) + log_cd +
         (static_cast<double>(d) / static_cast<double>(n)) * log_sum;
}

}  // namespace bnnlv::uncertainty
