#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bnnlv/checkpoint.hpp"
#include "bnnlv/gaussian.hpp"
#include "bnnlv/model.hpp"
#include "bnnlv/uncertainty.hpp"
#include "test_helpers.hpp"

using namespace bnnlv;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using test_helpers::random_matrix;
using test_helpers::random_vector;

namespace {

BnnLvModel toy_model(double noise = 1.0) {
  return BnnLvModel::make(1, {8, 8}, 1, 1.0, 1.0, noise);
}

// A model whose output equals its latent input: [x, z] -> z. Requires one
// hidden layer wide enough to pass z through both rectifier branches.
std::pair<BnnLvModel, VectorXd> latent_passthrough_model() {
  BnnLvModel model = BnnLvModel::make(1, {2}, 1, 1.0, 1.0, 1e-11);
  // Hidden: h1 = relu(z), h2 = relu(-z); output: h1 - h2 = z.
  VectorXd w = VectorXd::Zero(model.net.param_count());
  // Layer 0: rows over [w_x, w_z, b]
  w[0] = 0.0; w[1] = 1.0; w[2] = 0.0;    // h1 <- z
  w[3] = 0.0; w[4] = -1.0; w[5] = 0.0;   // h2 <- -z
  // Layer 1: [w_h1, w_h2, b]
  w[6] = 1.0; w[7] = -1.0; w[8] = 0.0;
  return {std::move(model), std::move(w)};
}

}  // namespace

TEST_CASE("log_joint matches term-by-term summation") {
  RngStream rng(41);
  BnnLvModel model = toy_model(0.5);
  Dataset data;
  const int n = 7;
  data.x = random_matrix(n, 1, rng);
  data.y = random_matrix(n, 1, rng, 2.0);
  VectorXd params = nn::random_params(model.net, 0.4, rng);
  VectorXd z = random_vector(n, rng);

  double expected = 0.0;
  for (int i = 0; i < n; ++i) {
    VectorXd in(2);
    in << data.x(i, 0), z[i];
    VectorXd pred = nn::forward(model.net, params, in);
    expected += gaussian_log_pdf_scalar(data.y(i, 0), pred[0], 0.5);
  }
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    expected += gaussian_log_pdf_scalar(params[i], 0.0, model.lambda_w);
  }
  for (int i = 0; i < n; ++i) expected += gaussian_log_pdf_scalar(z[i], 0.0, model.gamma_z);

  CHECK(log_joint(model, params, z, data) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("log_joint analytic fixtures") {
  BnnLvModel model = toy_model(1.0);
  SUBCASE("empty dataset keeps only the priors") {
    Dataset empty;
    empty.x.resize(0, 1);
    empty.y.resize(0, 1);
    VectorXd params = VectorXd::Zero(model.net.param_count());
    double expected = 0.0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      expected += gaussian_log_pdf_scalar(0.0, 0.0, model.lambda_w);
    }
    CHECK(log_joint(model, params, VectorXd::Zero(0), empty) == doctest::Approx(expected));
  }
  SUBCASE("all-zero instance evaluates every Gaussian at its mode") {
    Dataset one;
    one.x = MatrixXd::Zero(1, 1);
    one.y = MatrixXd::Zero(1, 1);
    VectorXd params = VectorXd::Zero(model.net.param_count());
    VectorXd z = VectorXd::Zero(1);
    double expected = -0.9189385332046727;  // likelihood at the mean
    expected += (params.size() + 1) * -0.9189385332046727;  // priors at the mode
    CHECK(log_joint(model, params, z, one) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch rejected") {
    Dataset one;
    one.x = MatrixXd::Zero(1, 1);
    one.y = MatrixXd::Zero(1, 1);
    VectorXd params = VectorXd::Zero(model.net.param_count());
    CHECK_THROWS_AS(log_joint(model, params, VectorXd::Zero(3), one), std::invalid_argument);
  }
}

TEST_CASE("sample_predictive degenerate noise collapses to the mean path") {
  RngStream rng(4);
  BnnLvModel model = BnnLvModel::make(1, {8}, 1, 1e-18, 1.0, 1e-18);
  VectorXd w = nn::random_params(model.net, 0.5, rng);
  PosteriorEnsemble ens;
  ens.weight_samples = {w};
  VectorXd x(1);
  x << 0.7;
  VectorXd in(2);
  in << 0.7, 0.0;
  double reference = nn::forward(model.net, w, in)[0];
  auto samples = sample_predictive(model, ens, x, 1, 50, rng);
  CHECK((samples.values.array() - reference).abs().maxCoeff() < 1e-4);
}

TEST_CASE("sample_predictive keeps per-weight grouping") {
  RngStream rng(8);
  BnnLvModel model = toy_model(1e-12);
  VectorXd w1 = VectorXd::Zero(model.net.param_count());
  VectorXd w2 = nn::random_params(model.net, 0.5, rng);
  PosteriorEnsemble ens;
  ens.weight_samples = {w1, w2};
  VectorXd x(1);
  x << 1.0;
  auto s = sample_predictive(model, ens, x, 2, 10, rng);
  CHECK(s.m_weights == 2);
  CHECK(s.l_noise == 10);
  // All-zero weights predict exactly zero regardless of z.
  CHECK(s.values.topRows(10).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("latent passthrough: pooled predictive variance matches the prior") {
  auto [model, w] = latent_passthrough_model();
  PosteriorEnsemble ens;
  for (int i = 0; i < 10; ++i) ens.weight_samples.push_back(w);
  RngStream rng(19);
  VectorXd x(1);
  x << 0.0;
  auto samples = sample_predictive(model, ens, x, 10, 1000, rng);
  double mean = samples.values.col(0).mean();
  double var = (samples.values.col(0).array() - mean).square().mean();
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("predictive sampling never consults latent posterior factors") {
  RngStream rng(6);
  BnnLvModel model = toy_model();
  FactorizedGaussianPosterior q;
  q.m_w = random_vector(model.net.param_count(), rng, 0.1);
  q.v_w = VectorXd::Constant(model.net.param_count(), 0.01);
  q.m_z = random_vector(50, rng);
  q.v_z = VectorXd::Constant(50, 0.5);
  q.noise_log_variance = VectorXd::Zero(1);

  RngStream e1(99), e2(99), s1(123), s2(123);
  PosteriorEnsemble ens1 = posterior_to_ensemble(model, q, 20, e1);
  q.m_z = VectorXd::Zero(0);  // delete the latent factors entirely
  q.v_z = VectorXd::Zero(0);
  PosteriorEnsemble ens2 = posterior_to_ensemble(model, q, 20, e2);
  VectorXd x(1);
  x << 0.3;
  auto a = sample_predictive(model, ens1, x, 20, 30, s1);
  auto b = sample_predictive(model, ens2, x, 20, 30, s2);
  CHECK(a.values == b.values);  // bitwise
}

TEST_CASE("pooled predictive variance equals epistemic plus aleatoric exactly") {
  RngStream rng(14);
  BnnLvModel model = toy_model(0.3);
  FactorizedGaussianPosterior q;
  q.m_w = random_vector(model.net.param_count(), rng, 0.3);
  q.v_w = VectorXd::Constant(model.net.param_count(), 0.05);
  q.m_z = VectorXd::Zero(1);
  q.v_z = VectorXd::Ones(1);
  q.noise_log_variance = VectorXd::Constant(1, std::log(0.3));
  RngStream er(1);
  PosteriorEnsemble ens = posterior_to_ensemble(model, q, 30, er);
  VectorXd x(1);
  x << -0.4;
  auto samples = sample_predictive(model, ens, x, 30, 40, rng);
  auto dec = uncertainty::variance_decomposition(samples);
  double mu = samples.values.col(0).mean();
  double pooled = (samples.values.col(0).array() - mu).square().mean();
  CHECK(std::abs(pooled - dec.epistemic[0] - dec.aleatoric[0]) < 1e-10);
}

TEST_CASE("posterior_to_ensemble moments and reproducibility") {
  BnnLvModel model = BnnLvModel::make(1, {1}, 1, 1.0, 1.0, 0.1);
  const int p = model.net.param_count();
  FactorizedGaussianPosterior q;
  q.m_w = VectorXd::Zero(p);
  q.v_w = VectorXd::Ones(p);
  q.m_z = VectorXd::Zero(1);
  q.v_z = VectorXd::Ones(1);
  q.noise_log_variance = VectorXd::Zero(1);

  SUBCASE("zero-variance limit returns the means") {
    FactorizedGaussianPosterior tight = q;
    tight.v_w = VectorXd::Constant(p, 1e-12);
    tight.m_w = VectorXd::Constant(p, 0.7);
    RngStream rng(5);
    PosteriorEnsemble ens = posterior_to_ensemble(model, tight, 10, rng);
    for (const auto& w : ens.weight_samples) {
      CHECK((w.array() - 0.7).abs().maxCoeff() < 1e-5);
    }
  }
  SUBCASE("standard-normal moments") {
    RngStream rng(6);
    PosteriorEnsemble ens = posterior_to_ensemble(model, q, 10000, rng);
    double acc = 0.0, sq = 0.0;
    for (const auto& w : ens.weight_samples) {
      acc += w[0];
      sq += w[0] * w[0];
    }
    double mean = acc / 10000.0;
    CHECK(std::abs(mean) < 0.05);
    CHECK(sq / 10000.0 - mean * mean == doctest::Approx(1.0).epsilon(0.1));
  }
  SUBCASE("seed reproducibility") {
    RngStream r1(7), r2(7);
    PosteriorEnsemble a = posterior_to_ensemble(model, q, 5, r1);
    PosteriorEnsemble b = posterior_to_ensemble(model, q, 5, r2);
    for (int i = 0; i < 5; ++i) CHECK(a.weight_samples[i] == b.weight_samples[i]);
  }
}

TEST_CASE("test_log_likelihood analytic fixtures") {
  // Network output is identically zero (all-zero weights); with S=1, unit
  // noise and zero latent influence, each point contributes the closed form.
  BnnLvModel model = BnnLvModel::make(1, {4}, 1, 1e-18, 1.0, 1.0);
  PosteriorEnsemble ens;
  ens.weight_samples = {VectorXd::Zero(model.net.param_count())};
  Dataset test;
  test.x = MatrixXd::Zero(5, 1);
  test.y = MatrixXd::Zero(5, 1);
  RngStream rng(2);
  CHECK(test_log_likelihood(model, ens, test, 1, rng) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-6));

  SUBCASE("shifting all targets by c costs c^2/2 nats") {
    Dataset shifted = test;
    shifted.y.array() += 1.5;
    RngStream r2(2);
    CHECK(test_log_likelihood(model, ens, shifted, 1, r2) ==
          doctest::Approx(-0.9189385332046727 - 1.5 * 1.5 / 2.0).epsilon(1e-6));
  }
  SUBCASE("empty test set rejected") {
    Dataset empty;
    empty.x.resize(0, 1);
    empty.y.resize(0, 1);
    RngStream r3(1);
    CHECK_THROWS_AS(test_log_likelihood(model, ens, empty, 1, r3), std::invalid_argument);
  }
}

TEST_CASE("test_log_likelihood matches a brute-force enumeration") {
  // With M ensemble members and S == M, draws enumerate the ensemble in
  // order; replicate the computation independently.
  RngStream rng(33);
  BnnLvModel model = BnnLvModel::make(1, {6}, 1, 1e-18, 1.0, 0.7);
  PosteriorEnsemble ens;
  for (int i = 0; i < 4; ++i) {
    RngStream wr(50 + i);
    ens.weight_samples.push_back(nn::random_params(model.net, 0.4, wr));
  }
  Dataset test;
  test.x = test_helpers::random_matrix(6, 1, rng);
  test.y = test_helpers::random_matrix(6, 1, rng);

  RngStream r1(11);
  double got = test_log_likelihood(model, ens, test, 4, r1);

  // gamma_z ~ 0 so the latent draw contributes nothing; enumerate weights.
  double expected = 0.0;
  for (int j = 0; j < test.size(); ++j) {
    VectorXd lls(4);
    for (int s = 0; s < 4; ++s) {
      VectorXd in(2);
      in << test.x(j, 0), 0.0;
      double pred = nn::forward(model.net, ens.weight_samples[s], in)[0];
      lls[s] = gaussian_log_pdf_scalar(test.y(j, 0), pred, 0.7);
    }
    expected += log_mean_exp(lls);
  }
  expected /= test.size();
  CHECK(got == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  RngStream rng(3);
  BnnLvModel model = toy_model(0.25);
  Checkpoint ckpt{model, FactorizedGaussianPosterior{}, PosteriorEnsemble{}, "unit-test"};
  ckpt.factorized->m_w = test_helpers::random_vector(model.net.param_count(), rng);
  ckpt.factorized->v_w =
      test_helpers::random_vector(model.net.param_count(), rng).array().abs() + 1e-6;
  ckpt.factorized->m_z = test_helpers::random_vector(10, rng);
  ckpt.factorized->v_z = test_helpers::random_vector(10, rng).array().abs() + 1e-6;
  ckpt.factorized->noise_log_variance = test_helpers::random_vector(1, rng);
  for (int i = 0; i < 3; ++i) {
    ckpt.ensemble->weight_samples.push_back(
        test_helpers::random_vector(model.net.param_count(), rng));
    ckpt.ensemble->noise_variances.push_back(
        test_helpers::random_vector(1, rng).array().abs() + 0.01);
  }
  ckpt.ensemble->provenance = PosteriorEnsemble::Provenance::hmc;

  auto path = std::filesystem::temp_directory_path() / "bnnlv_ckpt_test.json";
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.model.net.layer_sizes() == model.net.layer_sizes());
  CHECK(back.model.gamma_z == model.gamma_z);
  CHECK(back.model.noise_variance == model.noise_variance);
  CHECK(back.factorized->m_w == ckpt.factorized->m_w);
  CHECK(back.factorized->v_w == ckpt.factorized->v_w);
  CHECK(back.factorized->m_z == ckpt.factorized->m_z);
  CHECK(back.factorized->v_z == ckpt.factorized->v_z);
  CHECK(back.ensemble->weight_samples[2] == ckpt.ensemble->weight_samples[2]);
  CHECK(back.ensemble->noise_variances[1] == ckpt.ensemble->noise_variances[1]);
  CHECK(back.ensemble->provenance == PosteriorEnsemble::Provenance::hmc);
  CHECK(back.meta == "unit-test");
  std::filesystem::remove(path);
}

TEST_CASE("model invariants") {
  CHECK_THROWS_AS(BnnLvModel::make(1, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(BnnLvModel::make(1, {4}, 1, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(BnnLvModel::make(1, {4}, 1, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(BnnLvModel::make(1, {4}, 1, 1.0, 1.0, -0.5), std::invalid_argument);
  PosteriorEnsemble empty;
  BnnLvModel model = toy_model();
  CHECK_THROWS_AS(empty.validate(model), std::invalid_argument);
  RngStream rng(1);
  VectorXd x(1);
  x << 0.0;
  CHECK_THROWS_AS(sample_predictive(model, empty, x, 1, 10, rng), std::invalid_argument);
}
