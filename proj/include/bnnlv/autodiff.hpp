#pragma once

#include <Eigen/Dense>
#include <functional>
#include <initializer_list>
#include <vector>

#include "bnnlv/dense_net.hpp"

namespace bnnlv::ad {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class Tape;

// Handle to a node on a tape. Values are matrices; scalars are 1x1.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const MatrixXd& value() const;
  double scalar() const;
};

class Tape {
 public:
  Var input(MatrixXd value);     // differentiable leaf
  Var constant(MatrixXd value);  // leaf excluded from gradient accumulation

  // Runs the reverse sweep from a finite 1x1 objective.
  void backward(const Var& objective);

  const MatrixXd& value(int id) const { return nodes_[id].value; }
  const MatrixXd& grad(const Var& v) const;
  bool tracks_grad(int id) const { return nodes_[id].needs_grad; }
  void accumulate(int id, const MatrixXd& g);

  using BackwardFn = std::function<void(Tape&, const MatrixXd&)>;
  Var make(MatrixXd value, BackwardFn fn);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    MatrixXd value;
    MatrixXd grad;
    BackwardFn backward;
    bool needs_grad = true;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise and structural ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                       // elementwise, same shape
Var mul_const(Var a, const MatrixXd& c);     // elementwise by a constant
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var relu(Var a);
Var tanh_(Var a);
Var exp_(Var a);
Var log_(Var a);
Var sqrt_(Var a);                            // derivative guarded near zero
Var square(Var a);
Var softplus(Var a);
Var sum(Var a);                              // -> 1x1
Var mean(Var a);                             // -> 1x1
Var sum_sq(Var a);                           // -> 1x1
Var concat_rows(std::initializer_list<Var> parts);
Var concat_rows(const std::vector<Var>& parts);
Var row_range(Var a, int first_row, int n_rows);
Var reshape(Var a, int rows, int cols);      // column-major reindexing
Var clamp_box(Var a, const VectorXd& lo, const VectorXd& hi);  // per-row bounds

// Affine layer whose weights live in a flat parameter node: the segment
// [offset, offset + out*(in+1)) holds [W | b] row-major, bias last column.
// Value is W * h + b per column.
Var affine(Var params, int offset, int out_size, int in_size, Var h);
Var affine_const(const MatrixXd& w, const VectorXd& b, Var h);

// Rectifier network forward pass over a column batch, weights on the tape.
Var dense_forward(const nn::DenseNet& net, Var params, Var inputs);
// Same with fixed weights; gradients flow through the inputs only.
Var dense_forward_const(const nn::DenseNet& net, const VectorXd& params, Var inputs);

// Per-column diagonal-Gaussian log-likelihood of targets y given predictions
// h and log-variances (one per output row). Result is 1 x B.
Var gauss_ll_cols(Var h, const MatrixXd& y, Var log_var);
Var gauss_ll_cols_fixed(Var h, const MatrixXd& y, const VectorXd& variance);

// Per-column (1/alpha) * log( (1/K) * sum_k exp(alpha * s_kb) ), stable for
// alpha down to 1e-6. Input is K x B, result 1 x B.
Var alpha_log_mean_exp(Var scores, double alpha);

// KL( N(m_i, v_i) || N(0, prior_var) ) summed over all entries. m and v must
// have identical shapes; v must be positive.
Var gauss_kl_sum(Var m, Var v, double prior_var);

// Reductions used by the rollout risk objective; C is M x N.
Var row_mean(Var c);            // -> M x 1
Var pop_var(Var x);             // population variance over all entries -> 1x1
Var mean_row_pop_var(Var c);    // mean over rows of per-row population variance

// Spec-level gradient entry point: reverse-mode derivative of a scalar
// objective with respect to a flat parameter vector, checked finite.
using Objective = std::function<Var(Tape&, Var params)>;
VectorXd gradient(const Objective& objective, const VectorXd& params);

}  // namespace bnnlv::ad
