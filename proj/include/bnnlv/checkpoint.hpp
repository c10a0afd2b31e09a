#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "bnnlv/model.hpp"

namespace bnnlv {

// Model plus whichever posterior representations a run produced. JSON on
// disk; doubles round-trip bit-exactly.
struct Checkpoint {
  BnnLvModel model;
  std::optional<FactorizedGaussianPosterior> factorized;
  std::optional<PosteriorEnsemble> ensemble;
  std::string meta;  // free-form provenance note

  // Preferred ensemble for prediction: the stored one, else M draws from the
  // factorized posterior.
  PosteriorEnsemble prediction_ensemble(int m_draws, RngStream& rng) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bnnlv
