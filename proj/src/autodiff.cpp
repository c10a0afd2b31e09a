#include "bnnlv/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bnnlv::ad {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

const MatrixXd& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const MatrixXd& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw std::logic_error("Var::scalar on non-scalar node");
  return v(0, 0);
}

Var Tape::input(MatrixXd value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(MatrixXd value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make(MatrixXd value, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), {}, std::move(fn), true, false});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const MatrixXd& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

const MatrixXd& Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) {
    static const MatrixXd empty;
    throw std::logic_error("Tape::grad requested before backward reached the node");
  }
  return n.grad;
}

void Tape::backward(const Var& objective) {
  const MatrixXd& obj = value(objective.id);
  if (obj.rows() != 1 || obj.cols() != 1) throw std::logic_error("backward: objective must be scalar");
  if (!std::isfinite(obj(0, 0))) throw std::runtime_error("backward: objective is non-finite");
  accumulate(objective.id, MatrixXd::Ones(1, 1));
  for (int i = objective.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("operands live on different tapes");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  int ia = a.id, ib = b.id;
  return a.tape->make(a.value() + b.value(), [ia, ib](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  int ia = a.id, ib = b.id;
  return a.tape->make(a.value() - b.value(), [ia, ib](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  int ia = a.id, ib = b.id;
  return a.tape->make(a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var mul_const(Var a, const MatrixXd& c) {
  int ia = a.id;
  MatrixXd cc = c;
  return a.tape->make(a.value().cwiseProduct(cc), [ia, cc](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.cwiseProduct(cc));
  });
}

Var scale(Var a, double c) {
  int ia = a.id;
  return a.tape->make(a.value() * c, [ia, c](Tape& t, const MatrixXd& g) { t.accumulate(ia, g * c); });
}

Var add_scalar(Var a, double c) {
  int ia = a.id;
  return a.tape->make(a.value().array() + c, [ia](Tape& t, const MatrixXd& g) { t.accumulate(ia, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  int ia = a.id;
  return a.tape->make(a.value().cwiseMax(0.0), [ia](Tape& t, const MatrixXd& g) {
    // Subgradient 0 at the kink.
    t.accumulate(ia, (t.value(ia).array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Var tanh_(Var a) {
  int ia = a.id;
  MatrixXd v = a.value().array().tanh();
  MatrixXd vv = v;
  return a.tape->make(std::move(v), [ia, vv](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, (g.array() * (1.0 - vv.array().square())).matrix());
  });
}

Var exp_(Var a) {
  int ia = a.id;
  MatrixXd v = a.value().array().exp();
  MatrixXd vv = v;
  return a.tape->make(std::move(v), [ia, vv](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.cwiseProduct(vv));
  });
}

Var log_(Var a) {
  int ia = a.id;
  return a.tape->make(a.value().array().log(), [ia](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var sqrt_(Var a) {
  int ia = a.id;
  MatrixXd v = a.value().array().sqrt();
  MatrixXd vv = v;
  return a.tape->make(std::move(v), [ia, vv](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, (g.array() / (2.0 * vv.array()).max(1e-150)).matrix());
  });
}

Var square(Var a) {
  int ia = a.id;
  return a.tape->make(a.value().array().square(), [ia](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, (2.0 * g.array() * t.value(ia).array()).matrix());
  });
}

Var softplus(Var a) {
  int ia = a.id;
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  MatrixXd v = a.value().unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return a.tape->make(std::move(v), [ia](Tape& t, const MatrixXd& g) {
    MatrixXd s = t.value(ia).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    t.accumulate(ia, g.cwiseProduct(s));
  });
}

Var sum(Var a) {
  int ia = a.id;
  MatrixXd v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape->make(std::move(v), [ia](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, MatrixXd::Constant(t.value(ia).rows(), t.value(ia).cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_sq(Var a) {
  int ia = a.id;
  MatrixXd v(1, 1);
  v(0, 0) = a.value().squaredNorm();
  return a.tape->make(std::move(v), [ia](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, 2.0 * g(0, 0) * t.value(ia));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::logic_error("concat_rows: empty");
  Tape* tape = parts.front().tape;
  Eigen::Index cols = parts.front().value().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != cols) throw std::logic_error("concat_rows: column mismatch");
    rows += p.value().rows();
  }
  MatrixXd v(rows, cols);
  Eigen::Index at = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> sizes;
  for (const Var& p : parts) {
    v.middleRows(at, p.value().rows()) = p.value();
    at += p.value().rows();
    ids.push_back(p.id);
    sizes.push_back(p.value().rows());
  }
  return tape->make(std::move(v), [ids, sizes](Tape& t, const MatrixXd& g) {
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t.accumulate(ids[i], g.middleRows(row, sizes[i]));
      row += sizes[i];
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) { return concat_rows(std::vector<Var>(parts)); }

Var row_range(Var a, int first_row, int n_rows) {
  int ia = a.id;
  return a.tape->make(a.value().middleRows(first_row, n_rows),
                      [ia, first_row, n_rows](Tape& t, const MatrixXd& g) {
                        MatrixXd full = MatrixXd::Zero(t.value(ia).rows(), t.value(ia).cols());
                        full.middleRows(first_row, n_rows) = g;
                        t.accumulate(ia, full);
                      });
}

Var reshape(Var a, int rows, int cols) {
  int ia = a.id;
  if (a.value().size() != static_cast<Eigen::Index>(rows) * cols) throw std::logic_error("reshape: size mismatch");
  MatrixXd v = a.value().reshaped(rows, cols);
  return a.tape->make(std::move(v), [ia, rows, cols](Tape& t, const MatrixXd& g) {
    t.accumulate(ia, g.reshaped(t.value(ia).rows(), t.value(ia).cols()));
  });
}

Var clamp_box(Var a, const VectorXd& lo, const VectorXd& hi) {
  int ia = a.id;
  const MatrixXd& x = a.value();
  if (lo.size() != x.rows() || hi.size() != x.rows()) throw std::logic_error("clamp_box: bound size mismatch");
  MatrixXd v = x;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    v.row(i) = v.row(i).cwiseMax(lo[i]).cwiseMin(hi[i]);
  }
  VectorXd lo_c = lo, hi_c = hi;
  return a.tape->make(std::move(v), [ia, lo_c, hi_c](Tape& t, const MatrixXd& g) {
    const MatrixXd& orig = t.value(ia);
    MatrixXd masked = g;
    for (Eigen::Index i = 0; i < masked.rows(); ++i) {
      for (Eigen::Index j = 0; j < masked.cols(); ++j) {
        if (!(orig(i, j) > lo_c[i] && orig(i, j) < hi_c[i])) masked(i, j) = 0.0;
      }
    }
    t.accumulate(ia, masked);
  });
}

Var affine(Var params, int offset, int out_size, int in_size, Var h) {
  check_same_tape(params, h);
  int ip = params.id, ih = h.id;
  RowMajorMap wb(params.value().data() + offset, out_size, in_size + 1);
  MatrixXd v = wb.leftCols(in_size) * h.value();
  v.colwise() += wb.col(in_size);
  return params.tape->make(std::move(v), [ip, ih, offset, out_size, in_size](Tape& t, const MatrixXd& g) {
    RowMajorMap wb(t.value(ip).data() + offset, out_size, in_size + 1);
    const MatrixXd& hv = t.value(ih);
    if (t.tracks_grad(ip)) {
      MatrixXd gp = MatrixXd::Zero(t.value(ip).rows(), t.value(ip).cols());
      RowMajorMutMap gwb(gp.data() + offset, out_size, in_size + 1);
      gwb.leftCols(in_size) = g * hv.transpose();
      gwb.col(in_size) = g.rowwise().sum();
      t.accumulate(ip, gp);
    }
    t.accumulate(ih, wb.leftCols(in_size).transpose() * g);
  });
}

Var affine_const(const MatrixXd& w, const VectorXd& b, Var h) {
  int ih = h.id;
  MatrixXd v = w * h.value();
  v.colwise() += b;
  MatrixXd wc = w;
  return h.tape->make(std::move(v), [ih, wc](Tape& t, const MatrixXd& g) {
    t.accumulate(ih, wc.transpose() * g);
  });
}

Var dense_forward(const nn::DenseNet& net, Var params, Var inputs) {
  Var h = inputs;
  for (int l = 0; l < net.num_affine_layers(); ++l) {
    h = affine(params, net.layer_offset(l), net.layer_rows(l), net.layer_cols(l) - 1, h);
    if (l + 1 < net.num_affine_layers()) h = relu(h);
  }
  return h;
}

Var dense_forward_const(const nn::DenseNet& net, const VectorXd& params, Var inputs) {
  nn::check_params(net, params);
  Var h = inputs;
  for (int l = 0; l < net.num_affine_layers(); ++l) {
    RowMajorMap wb(params.data() + net.layer_offset(l), net.layer_rows(l), net.layer_cols(l));
    h = affine_const(wb.leftCols(net.layer_cols(l) - 1), wb.col(net.layer_cols(l) - 1), h);
    if (l + 1 < net.num_affine_layers()) h = relu(h);
  }
  return h;
}

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
}

Var gauss_ll_cols(Var h, const MatrixXd& y, Var log_var) {
  check_same_tape(h, log_var);
  int ih = h.id, iv = log_var.id;
  const MatrixXd& hv = h.value();
  if (y.rows() != hv.rows() || y.cols() != hv.cols()) throw std::logic_error("gauss_ll_cols: target shape mismatch");
  if (log_var.value().rows() != hv.rows() || log_var.value().cols() != 1) {
    throw std::logic_error("gauss_ll_cols: log_var must be K x 1");
  }
  VectorXd lv = log_var.value().col(0);
  VectorXd inv_var = (-lv.array()).exp();
  MatrixXd resid = y - hv;
  MatrixXd row(1, hv.cols());
  for (Eigen::Index b = 0; b < hv.cols(); ++b) {
    row(0, b) = -0.5 * (hv.rows() * kLogTwoPi + lv.sum() + resid.col(b).array().square().matrix().dot(inv_var));
  }
  MatrixXd y_c = y;
  return h.tape->make(std::move(row), [ih, iv, y_c](Tape& t, const MatrixXd& g) {
    const MatrixXd& hv = t.value(ih);
    VectorXd lv = t.value(iv).col(0);
    VectorXd inv_var = (-lv.array()).exp();
    MatrixXd resid = y_c - hv;
    // d/dh = (y - h)/var * g_col ; d/dlv_k = sum_b g_b (-1/2 + r^2/(2 var))
    MatrixXd gh = resid.array().colwise() * inv_var.array();
    gh.array().rowwise() *= g.row(0).array();
    t.accumulate(ih, gh);
    if (t.tracks_grad(iv)) {
      MatrixXd glv(lv.size(), 1);
      for (Eigen::Index k = 0; k < lv.size(); ++k) {
        double acc = 0.0;
        for (Eigen::Index b = 0; b < hv.cols(); ++b) {
          acc += g(0, b) * (-0.5 + 0.5 * resid(k, b) * resid(k, b) * inv_var[k]);
        }
        glv(k, 0) = acc;
      }
      t.accumulate(iv, glv);
    }
  });
}

Var gauss_ll_cols_fixed(Var h, const MatrixXd& y, const VectorXd& variance) {
  int ih = h.id;
  const MatrixXd& hv = h.value();
  if (y.rows() != hv.rows() || y.cols() != hv.cols()) throw std::logic_error("gauss_ll_cols_fixed: shape mismatch");
  if ((variance.array() <= 0.0).any()) throw std::invalid_argument("gauss_ll_cols_fixed: variance must be positive");
  VectorXd inv_var = variance.cwiseInverse();
  double log_det = variance.array().log().sum();
  MatrixXd resid = y - hv;
  MatrixXd row(1, hv.cols());
  for (Eigen::Index b = 0; b < hv.cols(); ++b) {
    row(0, b) = -0.5 * (hv.rows() * kLogTwoPi + log_det + resid.col(b).array().square().matrix().dot(inv_var));
  }
  MatrixXd y_c = y;
  VectorXd iv_c = inv_var;
  return h.tape->make(std::move(row), [ih, y_c, iv_c](Tape& t, const MatrixXd& g) {
    MatrixXd gh = (y_c - t.value(ih)).array().colwise() * iv_c.array();
    gh.array().rowwise() *= g.row(0).array();
    t.accumulate(ih, gh);
  });
}

Var alpha_log_mean_exp(Var scores, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("alpha_log_mean_exp: alpha must be positive");
  int is = scores.id;
  const MatrixXd& s = scores.value();
  MatrixXd row(1, s.cols());
  for (Eigen::Index b = 0; b < s.cols(); ++b) {
    double m = s.col(b).maxCoeff();
    double acc = (alpha * (s.col(b).array() - m)).exp().sum() / static_cast<double>(s.rows());
    row(0, b) = m + std::log(acc) / alpha;
  }
  return scores.tape->make(std::move(row), [is, alpha](Tape& t, const MatrixXd& g) {
    const MatrixXd& s = t.value(is);
    MatrixXd gs(s.rows(), s.cols());
    for (Eigen::Index b = 0; b < s.cols(); ++b) {
      double m = s.col(b).maxCoeff();
      VectorXd w = (alpha * (s.col(b).array() - m)).exp();
      gs.col(b) = g(0, b) * w / w.sum();
    }
    t.accumulate(is, gs);
  });
}

Var gauss_kl_sum(Var m, Var v, double prior_var) {
  check_same_tape(m, v);
  if (prior_var <= 0.0) throw std::invalid_argument("gauss_kl_sum: prior variance must be positive");
  int im = m.id, iv = v.id;
  const MatrixXd& mv = m.value();
  const MatrixXd& vv = v.value();
  if (mv.rows() != vv.rows() || mv.cols() != vv.cols()) throw std::logic_error("gauss_kl_sum: shape mismatch");
  if ((vv.array() <= 0.0).any()) throw std::invalid_argument("gauss_kl_sum: variances must be positive");
  MatrixXd out(1, 1);
  out(0, 0) = 0.5 * ((vv.array() + mv.array().square()) / prior_var - 1.0 + std::log(prior_var) - vv.array().log()).sum();
  return m.tape->make(std::move(out), [im, iv, prior_var](Tape& t, const MatrixXd& g) {
    double s = g(0, 0);
    t.accumulate(im, (s / prior_var) * t.value(im));
    t.accumulate(iv, (0.5 * s * (1.0 / prior_var - t.value(iv).array().inverse())).matrix());
  });
}

Var row_mean(Var c) {
  int ic = c.id;
  double n = static_cast<double>(c.value().cols());
  MatrixXd v = c.value().rowwise().mean();
  return c.tape->make(std::move(v), [ic, n](Tape& t, const MatrixXd& g) {
    t.accumulate(ic, (g / n).replicate(1, t.value(ic).cols()));
  });
}

Var pop_var(Var x) {
  int ix = x.id;
  const MatrixXd& v = x.value();
  double n = static_cast<double>(v.size());
  double mu = v.mean();
  MatrixXd out(1, 1);
  out(0, 0) = (v.array() - mu).square().sum() / n;
  return x.tape->make(std::move(out), [ix, n, mu](Tape& t, const MatrixXd& g) {
    t.accumulate(ix, (2.0 / n) * g(0, 0) * (t.value(ix).array() - mu).matrix());
  });
}

Var mean_row_pop_var(Var c) {
  int ic = c.id;
  const MatrixXd& v = c.value();
  double m = static_cast<double>(v.rows());
  double n = static_cast<double>(v.cols());
  VectorXd mu = v.rowwise().mean();
  MatrixXd out(1, 1);
  out(0, 0) = (v.array().colwise() - mu.array()).square().sum() / (m * n);
  return c.tape->make(std::move(out), [ic, m, n, mu](Tape& t, const MatrixXd& g) {
    MatrixXd centered = t.value(ic).array().colwise() - mu.array();
    t.accumulate(ic, (2.0 / (m * n)) * g(0, 0) * centered);
  });
}

VectorXd gradient(const Objective& objective, const VectorXd& params) {
  Tape tape;
  Var p = tape.input(params);
  Var obj = objective(tape, p);
  double val = obj.scalar();
  if (!std::isfinite(val)) {
    throw std::runtime_error("gradient: objective is non-finite at |params| = " +
                             std::to_string(params.norm()));
  }
  tape.backward(obj);
  VectorXd g = tape.grad(p).reshaped();
  if (!g.allFinite()) {
    Eigen::Index bad = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) { bad = i; break; }
    }
    throw std::runtime_error("gradient: non-finite derivative at parameter index " + std::to_string(bad));
  }
  return g;
}

}  // namespace bnnlv::ad
