#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "bnnlv/model.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv::inference {

using Eigen::VectorXd;

struct HmcConfig {
  int burn_in = 20000;
  int kept = 20000;
  int thin = 10;
  int leapfrog_steps = 30;
  double step_size = 0.0;  // <= 0 means auto (adapted during burn-in)
  double target_acceptance = 0.9;
  void validate() const;
};

// Joint log density and its gradient at a position.
using LogDensityFn = std::function<std::pair<double, VectorXd>(const VectorXd&)>;

struct HmcResult {
  std::vector<VectorXd> samples;  // kept/thin positions after burn-in
  double acceptance_rate = 0.0;   // over the sampling phase
  double step_size = 0.0;         // after adaptation
  int divergences = 0;
  std::vector<std::pair<int, double>> trace;  // (iteration, running acceptance)
};

// Plain HMC with identity mass and leapfrog integration; the step size is
// multiplicatively adapted toward the target acceptance during burn-in.
// Divergent trajectories are rejected with the step size halved; sustained
// divergence aborts.
HmcResult hmc(const LogDensityFn& target, VectorXd init, const HmcConfig& cfg, RngStream& rng);

// One leapfrog trajectory, exposed for reversibility tests. Returns the final
// (position, momentum).
std::pair<VectorXd, VectorXd> leapfrog(const LogDensityFn& target, VectorXd position,
                                       VectorXd momentum, double step_size, int steps);

// Posterior sampling for the latent-variable model: the position stacks
// [weights, per-point latents, output log-variances]; log-variances carry a
// N(log 0.1, 1) prior. The returned ensemble exposes the weight and noise
// coordinates.
PosteriorEnsemble hmc_sample(const BnnLvModel& model, const Dataset& data, const HmcConfig& cfg,
                             RngStream& rng, HmcResult* diagnostics = nullptr);

// The extended-target density used by hmc_sample, exposed for tests.
std::pair<double, VectorXd> bnnlv_hmc_target(const BnnLvModel& model, const Dataset& data,
                                             const VectorXd& position);

}  // namespace bnnlv::inference
