#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bnnlv/active_learning.hpp"
#include "bnnlv/util.hpp"
#include "test_helpers.hpp"

using namespace bnnlv;
using namespace bnnlv::al;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("select_batch fixtures") {
  CHECK(select_batch({5, 1, 4, 2, 3}, 2) == std::vector<int>{0, 2});
  CHECK(select_batch({1, 1, 1, 1}, 3) == std::vector<int>{0, 1, 2});
  CHECK(select_batch({3, 1, 2}, 3) == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(select_batch({}, 1), std::invalid_argument);
  CHECK_THROWS_AS(select_batch({1.0, 2.0}, 3), std::invalid_argument);
}

TEST_CASE("select_batch is invariant to constant score shifts") {
  RngStream rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(20);
    for (auto& s : scores) s = rng.normal();
    std::vector<double> shifted = scores;
    double c = rng.uniform(-10.0, 10.0);
    for (auto& s : shifted) s += c;
    CHECK(select_batch(scores, 5) == select_batch(shifted, 5));
  }
}

TEST_CASE("gp regression sanity") {
  RngStream rng(11);
  GpRegressor::FitOptions opts;

  SUBCASE("single-ish data: interpolation shrinks variance below the prior") {
    MatrixXd x(2, 1);
    x << 0.0, 5.0;
    VectorXd y(2);
    y << 1.0, 1.2;
    RngStream fit_rng(1);
    GpRegressor gp = GpRegressor::fit(x, y, opts, fit_rng);
    CHECK(gp.predict_variance(x.row(0).transpose()) <=
          gp.signal_variance() + gp.noise_variance() + 1e-9);
    CHECK(std::abs(gp.predict_mean(x.row(0).transpose()) - 1.0) < 0.5);
  }

  SUBCASE("noise-free sine is interpolated accurately") {
    const int n = 20;
    MatrixXd x(n, 1);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = -3.0 + 6.0 * i / (n - 1);
      y[i] = std::sin(x(i, 0));
    }
    RngStream fit_rng(2);
    GpRegressor gp = GpRegressor::fit(x, y, opts, fit_rng);
    double rmse = 0.0;
    const int m = 61;
    for (int i = 0; i < m; ++i) {
      double q = -3.0 + 6.0 * i / (m - 1);
      VectorXd qx(1);
      qx << q;
      double err = gp.predict_mean(qx) - std::sin(q);
      rmse += err * err;
    }
    rmse = std::sqrt(rmse / m);
    CHECK(rmse <= 0.05);
  }

  SUBCASE("variance reverts to signal plus noise far from data") {
    const int n = 30;
    MatrixXd x(n, 1);
    VectorXd y(n);
    RngStream data_rng(9);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = data_rng.uniform(-1.0, 1.0);
      y[i] = std::sin(3.0 * x(i, 0)) + 0.05 * data_rng.normal();
    }
    RngStream fit_rng(3);
    GpRegressor gp = GpRegressor::fit(x, y, opts, fit_rng);
    VectorXd far(1);
    far << 1e6;
    double prior = gp.signal_variance() + gp.noise_variance();
    CHECK(gp.predict_variance(far) == doctest::Approx(prior).epsilon(0.05));
    // And the closed-form Gaussian entropy matches the variance.
    CHECK(gp.predictive_entropy(far) ==
          doctest::Approx(0.5 * std::log(2.0 * M_PI * M_E * gp.predict_variance(far))));
  }
}

TEST_CASE("gp entropy score fixture") {
  // 0.5 ln(2 pi e) at unit predictive variance.
  CHECK(0.5 * std::log(2.0 * M_PI * M_E) == doctest::Approx(1.4189385332046727));
}

TEST_CASE("mutual information score vanishes for an identical-weights ensemble") {
  RngStream rng(5);
  BnnLvModel model = BnnLvModel::make(1, {8}, 1);
  VectorXd w = nn::random_params(model.net, 0.4, rng);
  PosteriorEnsemble ens;
  for (int i = 0; i < 50; ++i) ens.weight_samples.push_back(w);
  uncertainty::DecompositionConfig cfg;
  cfg.m_weights = 50;
  cfg.l_noise = 100;
  VectorXd x(1);
  x << 0.5;
  RngStream srng(8);
  double mi = acquisition_score(AcquisitionMethod::mutual_information, model, ens, x, cfg, srng);
  CHECK(mi > -0.1);
  CHECK(mi < 0.1);
}

TEST_CASE("homoscedastic special case: MI ranking equals total-entropy ranking") {
  // A BNN whose latent input is disconnected and noise fixed: the aleatoric
  // term is constant in x, so the two acquisition rules order pools equally.
  RngStream rng(23);
  BnnLvModel model = BnnLvModel::make(1, {8}, 1, 1e-18, 1.0, 0.25);
  PosteriorEnsemble ens;
  for (int i = 0; i < 40; ++i) {
    // Zero the latent input column so z never reaches the hidden layer.
    VectorXd w = nn::random_params(model.net, 0.5, rng);
    for (int row = 0; row < 8; ++row) w[row * 3 + 1] = 0.0;
    ens.weight_samples.push_back(w);
  }
  uncertainty::DecompositionConfig cfg;
  cfg.m_weights = 40;
  cfg.l_noise = 150;

  const int pool = 50;
  std::vector<double> mi(pool), h(pool);
  for (int i = 0; i < pool; ++i) {
    VectorXd x(1);
    x << -3.0 + 6.0 * i / (pool - 1);
    RngStream s1(1000 + i), s2(1000 + i);
    mi[i] = acquisition_score(AcquisitionMethod::mutual_information, model, ens, x, cfg, s1);
    h[i] = acquisition_score(AcquisitionMethod::total_entropy, model, ens, x, cfg, s2);
  }
  // Enumerate both rankings over the pool and compare batch selections.
  CHECK(select_batch(mi, 5) == select_batch(h, 5));
  CHECK(util::spearman(mi, h) > 0.95);
}

TEST_CASE("pool sampling, labeling and ranges") {
  RngStream rng(2);
  MatrixXd hp = sample_pool_inputs(Problem::hetero, 200, rng);
  CHECK(hp.minCoeff() >= -6.0);
  CHECK(hp.maxCoeff() <= 6.0);
  MatrixXd bp = sample_pool_inputs(Problem::bimodal, 200, rng);
  CHECK(bp.minCoeff() >= -0.5);
  CHECK(bp.maxCoeff() <= 2.0);
  MatrixXd wp = sample_pool_inputs(Problem::wetchicken, 200, rng);
  CHECK(wp.col(0).minCoeff() >= 0.0);
  CHECK(wp.col(2).minCoeff() >= -1.0);
  CHECK(wp.col(3).maxCoeff() <= 1.0);

  VectorXd wx(4);
  wx << 2.0, 4.9, 0.0, 1.0;
  VectorXd y = label_input(Problem::wetchicken, wx, rng);
  CHECK(y.size() == 2);
  CHECK(y[0] >= 0.0);
  CHECK(y[1] <= 5.0);
}

TEST_CASE("tiny active-learning loop runs end to end deterministically") {
  AlLoopConfig cfg;
  cfg.iterations = 2;
  cfg.pool_size = 10;
  cfg.batch_size = 2;
  cfg.test_size = 40;
  cfg.repetitions = 2;
  cfg.initial_data = 60;
  cfg.train.epochs = 20;
  cfg.train.minibatch = 30;
  cfg.train.k_mc = 2;
  cfg.decomposition.k = 5;
  cfg.decomposition.m_weights = 20;
  cfg.decomposition.l_noise = 20;
  cfg.eval_samples = 10;
  cfg.workers = 2;

  AlCurve a = run_al_experiment(AcquisitionMethod::mutual_information, Problem::hetero, cfg, 9);
  AlCurve b = run_al_experiment(AcquisitionMethod::mutual_information, Problem::hetero, cfg, 9);
  REQUIRE(a.records.size() == 2 * 3);
  CHECK(a.failed_repetitions.empty());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].test_log_likelihood == b.records[i].test_log_likelihood);
    CHECK(a.records[i].train_size == b.records[i].train_size);
  }
  // Training-set growth: initial + iteration * batch.
  for (const auto& rec : a.records) {
    CHECK(rec.train_size == cfg.initial_data + rec.iteration * cfg.batch_size);
  }

  // GP route too.
  AlCurve g = run_al_experiment(AcquisitionMethod::gp_entropy, Problem::hetero, cfg, 9);
  CHECK(g.records.size() == 2 * 3);
  CHECK(g.failed_repetitions.empty());

  SUBCASE("zero iterations returns only the initial point") {
    AlLoopConfig zero = cfg;
    zero.iterations = 0;
    zero.repetitions = 1;
    AlCurve c = run_al_experiment(AcquisitionMethod::total_entropy, Problem::hetero, zero, 9);
    REQUIRE(c.records.size() == 1);
    CHECK(c.records[0].iteration == 0);
    CHECK(c.records[0].train_size == zero.initial_data);
  }
}

TEST_CASE("al config invariants") {
  AlLoopConfig cfg;
  cfg.batch_size = 100;
  cfg.pool_size = 50;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
