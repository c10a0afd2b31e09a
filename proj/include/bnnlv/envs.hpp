#pragma once

#include <vector>

#include "bnnlv/model.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv::envs {

// y = 7 sin(x) + 3 |cos(x/2)| eps; inputs from a three-component Gaussian
// mixture so data is dense at the borders and center but sparse in between.
struct HeteroToyConfig {
  double means[3] = {-4.0, 0.0, 4.0};
  double stddevs[3] = {0.4, 0.9, 0.4};
};

double hetero_label(double x, RngStream& rng);
double hetero_input_density(double x);
double sample_hetero_input(RngStream& rng);
Dataset sample_hetero(int n, RngStream& rng);

// y = 10 sin(x) + eps with probability 1/2, else 10 cos(x) + eps, on
// x in [-0.5, 2]; inputs x = -0.5 + e with e ~ Exp(2), rejecting x > 2.
struct BimodalToyConfig {
  double x_min = -0.5;
  double x_max = 2.0;
  double rate = 2.0;
};

double bimodal_label(double x, RngStream& rng);
double bimodal_input_density(double x);
double sample_bimodal_input(RngStream& rng);
Dataset sample_bimodal(int n, RngStream& rng);

// Two-dimensional canoeist benchmark: drift grows and turbulence shrinks with
// the cross-river position, and passing the waterfall at y = l resets the
// state to the origin.
struct WetChickenParams {
  double width = 5.0;
  double length = 5.0;
};

struct WcState {
  double x = 0.0;
  double y = 0.0;
};

struct WcAction {
  double ax = 0.0;
  double ay = 0.0;
};

struct WcStepResult {
  WcState next;
  bool action_clamped = false;
};

// One transition with explicit turbulence tau in [-1, 1]. Out-of-range
// actions are clamped and flagged, never rejected.
WcStepResult wetchicken_step(const WetChickenParams& params, const WcState& state,
                             const WcAction& action, double tau);

struct Transition {
  WcState s;
  WcAction a;
  WcState next;
};

// Random-exploration transitions from the origin; resets happen through the
// dynamics themselves.
std::vector<Transition> wetchicken_batch(const WetChickenParams& params, int n, RngStream& rng);

// X = [x, y, ax, ay], Y = [x', y'].
Dataset transitions_to_dataset(const std::vector<Transition>& transitions);

}  // namespace bnnlv::envs
