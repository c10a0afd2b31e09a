#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bnnlv/envs.hpp"

using namespace bnnlv;
using namespace bnnlv::envs;

TEST_CASE("wetchicken_step fixtures from the case equations") {
  WetChickenParams p;
  SUBCASE("still water at the origin drifts nowhere") {
    auto r = wetchicken_step(p, {0.0, 0.0}, {0.0, 0.0}, 0.0);
    CHECK(r.next.x == 0.0);
    CHECK(r.next.y == 0.0);  // y_hat = -1 floors to 0
    CHECK_FALSE(r.action_clamped);
  }
  SUBCASE("waterfall reset to the origin") {
    auto r = wetchicken_step(p, {2.0, 4.9}, {0.0, 1.0}, 1.0);
    // v = 1.2, s = 2.3, y_hat = 4.9 + 0 + 1.2 + 2.3 = 8.4 > 5
    CHECK(r.next.x == 0.0);
    CHECK(r.next.y == 0.0);
  }
  SUBCASE("x clamps at the right bank") {
    auto r = wetchicken_step(p, {4.5, 2.0}, {1.0, 0.0}, 0.0);
    // v = 2.7, s = 0.8, y_hat = 2 - 1 + 2.7 = 3.7
    CHECK(r.next.x == 5.0);
    CHECK(r.next.y == doctest::Approx(3.7));
  }
  SUBCASE("x + a_x < 0 resets x to zero") {
    auto r = wetchicken_step(p, {0.3, 2.0}, {-1.0, 0.0}, 0.0);
    CHECK(r.next.x == 0.0);
  }
  SUBCASE("out-of-range actions clamp with a flag") {
    auto r = wetchicken_step(p, {2.0, 2.0}, {3.0, -4.0}, 0.0);
    CHECK(r.action_clamped);
    auto ref = wetchicken_step(p, {2.0, 2.0}, {1.0, -1.0}, 0.0);
    CHECK(r.next.x == ref.next.x);
    CHECK(r.next.y == ref.next.y);
  }
  SUBCASE("tau outside [-1,1] is rejected") {
    CHECK_THROWS_AS(wetchicken_step(p, {0, 0}, {0, 0}, 1.5), std::invalid_argument);
  }
}

TEST_CASE("wetchicken dynamics map the box into itself") {
  WetChickenParams p;
  RngStream rng(77);
  for (int i = 0; i < 1000000; ++i) {
    WcState s{rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)};
    WcAction a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    auto r = wetchicken_step(p, s, a, rng.uniform(-1.0, 1.0));
    if (!(r.next.x >= 0.0 && r.next.x <= 5.0 && r.next.y >= 0.0 && r.next.y <= 5.0)) {
      CHECK(r.next.x >= 0.0);
      CHECK(r.next.x <= 5.0);
      CHECK(r.next.y >= 0.0);
      CHECK(r.next.y <= 5.0);
      break;
    }
  }
  CHECK(true);
}

TEST_CASE("waterfall reset whenever max drift pushes past the edge") {
  WetChickenParams p;
  // y close to l and full drift; with tau = 1 and x = 5: v = 3, s = 0.5,
  // y_hat = 4.9 - 1 + 3 + 0.5 = 7.4 > 5 -> exact origin reset.
  auto r = wetchicken_step(p, {5.0, 4.9}, {0.0, 0.0}, 1.0);
  CHECK(r.next.x == 0.0);
  CHECK(r.next.y == 0.0);
}

TEST_CASE("wetchicken_batch is deterministic and in-box") {
  WetChickenParams p;
  RngStream a(5), b(5);
  auto t1 = wetchicken_batch(p, 2000, a);
  auto t2 = wetchicken_batch(p, 2000, b);
  REQUIRE(t1.size() == 2000);
  bool identical = true, in_box = true;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    identical = identical && t1[i].s.x == t2[i].s.x && t1[i].next.y == t2[i].next.y &&
                t1[i].a.ax == t2[i].a.ax;
    in_box = in_box && t1[i].next.x >= 0 && t1[i].next.x <= 5 && t1[i].next.y >= 0 &&
             t1[i].next.y <= 5;
  }
  CHECK(identical);
  CHECK(in_box);
  // Chained exploration: each next state is the following start state.
  CHECK(t1[10].next.x == t1[11].s.x);
  CHECK(t1[10].next.y == t1[11].s.y);
}

TEST_CASE("heteroscedastic toy matches its analytic law") {
  RngStream rng(31);
  SUBCASE("conditional mean and noise at fixed x") {
    double sum0 = 0.0, sum_pi = 0.0, sq_pi = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      sum0 += hetero_label(0.0, rng);
      double y = hetero_label(M_PI, rng);
      sum_pi += y;
      sq_pi += y * y;
    }
    CHECK(std::abs(sum0 / n) < 0.1);  // 7 sin 0 = 0
    double mean_pi = sum_pi / n;
    double sd_pi = std::sqrt(sq_pi / n - mean_pi * mean_pi);
    CHECK(mean_pi == doctest::Approx(7.0 * std::sin(M_PI)).epsilon(0.05));
    CHECK(sd_pi < 1e-9);  // 3 |cos(pi/2)| = 0 exactly at x = pi
  }
  SUBCASE("dataset shape and determinism") {
    RngStream r1(4), r2(4);
    Dataset d1 = sample_hetero(750, r1);
    Dataset d2 = sample_hetero(750, r2);
    CHECK(d1.size() == 750);
    CHECK(d1.x == d2.x);
    CHECK(d1.y == d2.y);
  }
  SUBCASE("density integrates to one and vanishes in the tails") {
    double acc = 0.0;
    const int steps = 20000;
    for (int i = 0; i < steps; ++i) {
      double x = -10.0 + 20.0 * (i + 0.5) / steps;
      acc += hetero_input_density(x) * (20.0 / steps);
    }
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(hetero_input_density(-50.0) < 1e-12);
    CHECK(hetero_input_density(50.0) < 1e-12);
  }
}

TEST_CASE("bimodal toy branch structure") {
  RngStream rng(13);
  SUBCASE("cluster gap at x = 1.5") {
    // Branch means 10 sin(1.5) = 9.975 and 10 cos(1.5) = 0.707.
    int hi = 0, lo = 0;
    double hi_acc = 0.0, lo_acc = 0.0;
    for (int i = 0; i < 10000; ++i) {
      double y = bimodal_label(1.5, rng);
      if (y > 5.0) {
        ++hi;
        hi_acc += y;
      } else {
        ++lo;
        lo_acc += y;
      }
    }
    CHECK(hi > 4500);
    CHECK(lo > 4500);
    CHECK(hi_acc / hi - lo_acc / lo == doctest::Approx(9.975 - 0.707).epsilon(0.02));
  }
  SUBCASE("unimodal at the crossing point") {
    double acc = 0.0, sq = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      double y = bimodal_label(M_PI / 4.0, rng);
      acc += y;
      sq += y * y;
    }
    double mean = acc / n;
    double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(10.0 / std::sqrt(2.0)).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0).epsilon(0.1));  // only the unit noise remains
  }
  SUBCASE("inputs live in the stated interval with a decreasing density") {
    Dataset d = sample_bimodal(750, rng);
    CHECK(d.size() == 750);
    CHECK(d.x.minCoeff() >= -0.5);
    CHECK(d.x.maxCoeff() <= 2.0);
    CHECK(bimodal_input_density(-0.4) > bimodal_input_density(0.5));
    CHECK(bimodal_input_density(0.5) > bimodal_input_density(1.9));
    CHECK(bimodal_input_density(-0.6) == 0.0);
    CHECK(bimodal_input_density(2.1) == 0.0);
    // Normalization by quadrature.
    double acc = 0.0;
    const int steps = 20000;
    for (int i = 0; i < steps; ++i) {
      double x = -0.5 + 2.5 * (i + 0.5) / steps;
      acc += bimodal_input_density(x) * (2.5 / steps);
    }
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("transitions serialize to a 4-in 2-out dataset") {
  WetChickenParams p;
  RngStream rng(2);
  auto batch = wetchicken_batch(p, 100, rng);
  Dataset d = transitions_to_dataset(batch);
  CHECK(d.x.rows() == 100);
  CHECK(d.x.cols() == 4);
  CHECK(d.y.cols() == 2);
  CHECK(d.x(7, 0) == batch[7].s.x);
  CHECK(d.y(7, 1) == batch[7].next.y);
  CHECK_THROWS_AS(transitions_to_dataset({}), std::invalid_argument);
}
