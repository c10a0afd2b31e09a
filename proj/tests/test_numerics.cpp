#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bnnlv/autodiff.hpp"
#include "bnnlv/dense_net.hpp"
#include "bnnlv/gaussian.hpp"
#include "bnnlv/rng.hpp"
#include "test_helpers.hpp"

using namespace bnnlv;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using test_helpers::finite_difference;
using test_helpers::max_scaled_error;
using test_helpers::random_matrix;
using test_helpers::random_vector;

namespace {

// Straight-line re-evaluation of a dense net, no shared code with forward().
VectorXd naive_forward(const std::vector<int>& sizes, const VectorXd& params, VectorXd h) {
  int offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    int rows = sizes[l + 1], cols = sizes[l];
    VectorXd next(rows);
    for (int i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += params[offset + i * (cols + 1) + j] * h[j];
      acc += params[offset + i * (cols + 1) + cols];
      next[i] = acc;
    }
    offset += rows * (cols + 1);
    if (l + 2 < sizes.size()) {
      for (int i = 0; i < rows; ++i) next[i] = std::max(next[i], 0.0);
    }
    h = next;
  }
  return h;
}

double squared_error_loss(const nn::DenseNet& net, const VectorXd& params, const MatrixXd& x,
                          const MatrixXd& y) {
  MatrixXd pred = nn::forward_batch(net, params, x);
  return (pred - y).squaredNorm();
}

}  // namespace

TEST_CASE("forward: identity affine map") {
  nn::DenseNet net({2, 2});
  VectorXd params(6);
  params << 1, 0, 0, 0, 1, 0;  // [W | b] row-major, identity weights, zero bias
  VectorXd in(2);
  in << -1, 2;
  VectorXd out = nn::forward(net, params, in);
  CHECK(out[0] == doctest::Approx(-1.0));
  CHECK(out[1] == doctest::Approx(2.0));
}

TEST_CASE("forward: rectifier kills negatives in hidden layers") {
  nn::DenseNet net({2, 2, 2});
  VectorXd params(12);
  params << 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0;
  VectorXd in(2);
  in << -1, 2;
  VectorXd out = nn::forward(net, params, in);
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[1] == doctest::Approx(2.0));
}

TEST_CASE("forward matches straight-line re-evaluation") {
  RngStream rng(11);
  nn::DenseNet net({2, 20, 20, 1});
  VectorXd params = nn::random_params(net, 0.7, rng);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd in = random_vector(2, rng, 2.0);
    VectorXd a = nn::forward(net, params, in);
    VectorXd b = naive_forward(net.layer_sizes(), params, in);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward is deterministic and rejects bad dimensions") {
  RngStream rng(3);
  nn::DenseNet net({3, 8, 2});
  VectorXd params = nn::random_params(net, 0.5, rng);
  VectorXd in = random_vector(3, rng);
  VectorXd a = nn::forward(net, params, in);
  VectorXd b = nn::forward(net, params, in);
  CHECK(a == b);  // bit identical
  CHECK_THROWS_AS(nn::forward(net, params, random_vector(4, rng)), std::invalid_argument);
  CHECK_THROWS_AS(nn::forward(net, random_vector(3, rng), in), std::invalid_argument);
}

TEST_CASE("gradient: analytic fixtures") {
  // f(w) = w^2 at w = 3 -> 6
  VectorXd w(1);
  w << 3.0;
  VectorXd g = ad::gradient(
      [](ad::Tape&, ad::Var p) { return ad::sum(ad::square(p)); }, w);
  CHECK(g[0] == doctest::Approx(6.0));

  // f(w) = relu(w) at w = -1 -> 0 (and 0 at the kink by convention)
  w << -1.0;
  g = ad::gradient([](ad::Tape&, ad::Var p) { return ad::sum(ad::relu(p)); }, w);
  CHECK(g[0] == 0.0);
  w << 0.0;
  g = ad::gradient([](ad::Tape&, ad::Var p) { return ad::sum(ad::relu(p)); }, w);
  CHECK(g[0] == 0.0);
}

TEST_CASE("gradient: non-finite objective is rejected with context") {
  VectorXd w(1);
  w << -2.0;
  CHECK_THROWS_AS(ad::gradient([](ad::Tape&, ad::Var p) { return ad::log_(p); }, w),
                  std::runtime_error);
}

TEST_CASE("gradient of network loss matches central differences") {
  RngStream rng(17);
  nn::DenseNet net({2, 12, 12, 1});
  MatrixXd x = random_matrix(2, 5, rng, 1.5);
  MatrixXd y = random_matrix(1, 5, rng, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd params = nn::random_params(net, 0.6, rng);
    VectorXd g_ad = ad::gradient(
        [&](ad::Tape& t, ad::Var p) {
          return ad::sum_sq(ad::sub(ad::dense_forward(net, p, t.constant(x)), t.constant(y)));
        },
        params);
    VectorXd g_fd = finite_difference(
        [&](const VectorXd& p) { return squared_error_loss(net, p, x, y); }, params);
    CHECK(max_scaled_error(g_ad, g_fd) < 1e-5);
  }
}

TEST_CASE("tape primitives match finite differences") {
  RngStream rng(23);

  SUBCASE("elementwise chain") {
    VectorXd p = random_vector(6, rng).array() + 3.0;
    auto build = [](ad::Tape&, ad::Var v) {
      return ad::sum(ad::mul(ad::log_(v), ad::sqrt_(ad::exp_(ad::scale(v, 0.3)))));
    };
    auto value = [&](const VectorXd& v) {
      return (v.array().log() * (0.3 * v.array()).exp().sqrt()).sum();
    };
    CHECK(max_scaled_error(ad::gradient(build, p), finite_difference(value, p)) < 1e-6);
  }

  SUBCASE("tanh softplus square") {
    VectorXd p = random_vector(5, rng);
    auto build = [](ad::Tape&, ad::Var v) {
      return ad::sum(ad::square(ad::tanh_(ad::softplus(v))));
    };
    auto value = [&](const VectorXd& v) {
      return v.unaryExpr([](double x) {
                double s = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
                double t = std::tanh(s);
                return t * t;
              })
          .sum();
    };
    CHECK(max_scaled_error(ad::gradient(build, p), finite_difference(value, p)) < 1e-6);
  }

  SUBCASE("gaussian log-likelihood with learned log-variance") {
    // params = [h (4); log_var (2)]
    MatrixXd y = random_matrix(2, 2, rng);
    auto build = [&](ad::Tape& t, ad::Var v) {
      ad::Var h = ad::reshape(ad::row_range(v, 0, 4), 2, 2);
      ad::Var lv = ad::row_range(v, 4, 2);
      return ad::sum(ad::gauss_ll_cols(h, y, lv));
    };
    auto value = [&](const VectorXd& v) {
      double acc = 0.0;
      for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
          acc += gaussian_log_pdf_scalar(y(k, b), v[b * 2 + k], std::exp(v[4 + k]));
        }
      }
      return acc;
    };
    VectorXd p = random_vector(6, rng, 0.5);
    CHECK(max_scaled_error(ad::gradient(build, p), finite_difference(value, p)) < 1e-6);
  }

  SUBCASE("alpha log-mean-exp softmax weights") {
    for (double alpha : {1.0, 0.37, 1e-6}) {
      VectorXd p = random_vector(8, rng, 2.0);
      auto build = [&](ad::Tape&, ad::Var v) {
        return ad::sum(ad::alpha_log_mean_exp(ad::reshape(v, 4, 2), alpha));
      };
      auto value = [&](const VectorXd& v) {
        MatrixXd m = v.reshaped(4, 2);
        double acc = 0.0;
        for (int b = 0; b < 2; ++b) {
          double mx = m.col(b).maxCoeff();
          double s = (alpha * (m.col(b).array() - mx)).exp().mean();
          acc += mx + std::log(s) / alpha;
        }
        return acc;
      };
      CHECK(max_scaled_error(ad::gradient(build, p), finite_difference(value, p)) < 1e-5);
    }
  }

  SUBCASE("kl divergence of diagonal gaussians") {
    VectorXd p(6);
    p << 0.3, -0.8, 1.2, 0.5, 1.5, 0.9;  // means then variances
    auto build = [](ad::Tape&, ad::Var v) {
      return ad::gauss_kl_sum(ad::row_range(v, 0, 3), ad::row_range(v, 3, 3), 2.0);
    };
    auto value = [](const VectorXd& v) {
      double acc = 0.0;
      for (int i = 0; i < 3; ++i) {
        acc += 0.5 * ((v[3 + i] + v[i] * v[i]) / 2.0 - 1.0 + std::log(2.0) - std::log(v[3 + i]));
      }
      return acc;
    };
    CHECK(max_scaled_error(ad::gradient(build, p), finite_difference(value, p)) < 1e-7);
    // KL(N(1,1) || N(0,1)) = 0.5
    ad::Tape t;
    ad::Var m = t.input(MatrixXd::Constant(1, 1, 1.0));
    ad::Var v = t.input(MatrixXd::Constant(1, 1, 1.0));
    CHECK(ad::gauss_kl_sum(m, v, 1.0).scalar() == doctest::Approx(0.5));
  }

  SUBCASE("variance reductions") {
    VectorXd p = random_vector(12, rng);
    auto build = [](ad::Tape&, ad::Var v) {
      ad::Var c = ad::reshape(v, 3, 4);
      return ad::add(ad::pop_var(ad::row_mean(c)), ad::mean_row_pop_var(c));
    };
    auto value = [](const VectorXd& v) {
      MatrixXd c = v.reshaped(3, 4);
      VectorXd rm = c.rowwise().mean();
      double epi = (rm.array() - rm.mean()).square().sum() / 3.0;
      double ale = (c.array().colwise() - rm.array()).square().sum() / 12.0;
      return epi + ale;
    };
    CHECK(max_scaled_error(ad::gradient(build, p), finite_difference(value, p)) < 1e-6);
  }

  SUBCASE("clamp passes gradients only strictly inside the box") {
    VectorXd lo = VectorXd::Constant(1, 0.0), hi = VectorXd::Constant(1, 5.0);
    VectorXd p(3);
    p << -1.0, 2.5, 7.0;
    VectorXd g = ad::gradient(
        [&](ad::Tape&, ad::Var v) {
          return ad::sum(ad::square(ad::clamp_box(ad::reshape(v, 1, 3), lo, hi)));
        },
        p);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == doctest::Approx(5.0));
    CHECK(g[2] == 0.0);
  }
}

TEST_CASE("gaussian_log_pdf fixtures") {
  VectorXd z1 = VectorXd::Zero(1), one = VectorXd::Ones(1);
  CHECK(gaussian_log_pdf(z1, z1, one) == doctest::Approx(-0.9189385332046727).epsilon(1e-9));
  VectorXd z2 = VectorXd::Zero(2), one2 = VectorXd::Ones(2);
  CHECK(gaussian_log_pdf(z2, z2, one2) == doctest::Approx(-1.8378770664093453).epsilon(1e-9));
  VectorXd y(1), mu(1), v(1);
  y << 1.0;
  mu << 0.0;
  v << 4.0;
  CHECK(gaussian_log_pdf(y, mu, v) == doctest::Approx(-1.7370857137394289).epsilon(1e-9));
  v << 0.0;
  CHECK_THROWS_AS(gaussian_log_pdf(y, mu, v), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_log_pdf(y, VectorXd::Zero(2), VectorXd::Ones(2)), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and independent") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool all_equal = true, any_differ = false;
  for (int i = 0; i < 1000; ++i) {
    auto x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    all_equal = all_equal && (x == y);
    any_differ = any_differ || (x != z);
  }
  CHECK(all_equal);
  CHECK(any_differ);

  RngStream parent(9, 1);
  RngStream d1 = parent.derive(5);
  parent.normal();  // consuming draws must not change derived identities
  RngStream d2 = parent.derive(5);
  CHECK(d1.uniform01() == d2.uniform01());

  // Rough moment sanity for the normal generator.
  RngStream n(123);
  double sum = 0.0, sum_sq = 0.0;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) {
    double x = n.normal();
    sum += x;
    sum_sq += x * x;
  }
  CHECK(std::abs(sum / draws) < 0.01);
  CHECK(sum_sq / draws == doctest::Approx(1.0).epsilon(0.02));
}
