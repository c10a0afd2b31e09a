#include "bnnlv/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bnnlv::envs {

namespace {
constexpr double kSqrtTwoPi = 2.5066282746310005024157652848110;
}

double hetero_label(double x, RngStream& rng) {
  return 7.0 * std::sin(x) + 3.0 * std::abs(std::cos(x / 2.0)) * rng.normal();
}

double hetero_input_density(double x) {
  HeteroToyConfig cfg;
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    double z = (x - cfg.means[i]) / cfg.stddevs[i];
    acc += std::exp(-0.5 * z * z) / (cfg.stddevs[i] * kSqrtTwoPi);
  }
  return acc / 3.0;
}

double sample_hetero_input(RngStream& rng) {
  HeteroToyConfig cfg;
  int component = rng.uniform_int(3);
  return cfg.means[component] + cfg.stddevs[component] * rng.normal();
}

Dataset sample_hetero(int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("sample_hetero: need n >= 1");
  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    double x = sample_hetero_input(rng);
    d.x(i, 0) = x;
    d.y(i, 0) = hetero_label(x, rng);
  }
  return d;
}

double bimodal_label(double x, RngStream& rng) {
  double mean = rng.uniform01() < 0.5 ? 10.0 * std::sin(x) : 10.0 * std::cos(x);
  return mean + rng.normal();
}

double bimodal_input_density(double x) {
  BimodalToyConfig cfg;
  if (x < cfg.x_min || x > cfg.x_max) return 0.0;
  double norm = 1.0 - std::exp(-cfg.rate * (cfg.x_max - cfg.x_min));
  return cfg.rate * std::exp(-cfg.rate * (x - cfg.x_min)) / norm;
}

double sample_bimodal_input(RngStream& rng) {
  BimodalToyConfig cfg;
  for (;;) {
    double x = cfg.x_min + rng.exponential(cfg.rate);
    if (x <= cfg.x_max) return x;
  }
}

Dataset sample_bimodal(int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("sample_bimodal: need n >= 1");
  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    double x = sample_bimodal_input(rng);
    d.x(i, 0) = x;
    d.y(i, 0) = bimodal_label(x, rng);
  }
  return d;
}

WcStepResult wetchicken_step(const WetChickenParams& params, const WcState& state,
                             const WcAction& action, double tau) {
  if (tau < -1.0 || tau > 1.0) throw std::invalid_argument("wetchicken_step: tau must be in [-1, 1]");
  WcStepResult result;
  double ax = std::clamp(action.ax, -1.0, 1.0);
  double ay = std::clamp(action.ay, -1.0, 1.0);
  result.action_clamped = (ax != action.ax) || (ay != action.ay);

  double drift = 3.0 * state.x / params.width;
  double turbulence = 3.5 - drift;
  double y_hat = state.y + (ay - 1.0) + drift + turbulence * tau;

  double x_next;
  if (state.x + ax < 0.0) {
    x_next = 0.0;
  } else if (y_hat > params.length) {
    x_next = 0.0;
  } else if (state.x + ax > params.width) {
    x_next = params.width;
  } else {
    x_next = state.x + ax;
  }
  double y_next;
  if (y_hat < 0.0) {
    y_next = 0.0;
  } else if (y_hat > params.length) {
    y_next = 0.0;
  } else {
    y_next = y_hat;
  }
  result.next = WcState{x_next, y_next};
  return result;
}

std::vector<Transition> wetchicken_batch(const WetChickenParams& params, int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("wetchicken_batch: need n >= 1");
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(n));
  WcState state{0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    WcAction action{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    double tau = rng.uniform(-1.0, 1.0);
    WcState next = wetchicken_step(params, state, action, tau).next;
    out.push_back(Transition{state, action, next});
    state = next;
  }
  return out;
}

Dataset transitions_to_dataset(const std::vector<Transition>& transitions) {
  if (transitions.empty()) throw std::invalid_argument("transitions_to_dataset: empty batch");
  Dataset d;
  const int n = static_cast<int>(transitions.size());
  d.x.resize(n, 4);
  d.y.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const Transition& t = transitions[static_cast<std::size_t>(i)];
    d.x(i, 0) = t.s.x;
    d.x(i, 1) = t.s.y;
    d.x(i, 2) = t.a.ax;
    d.x(i, 3) = t.a.ay;
    d.y(i, 0) = t.next.x;
    d.y(i, 1) = t.next.y;
  }
  return d;
}

}  // namespace bnnlv::envs
