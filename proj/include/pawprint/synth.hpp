#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pawprint/core.hpp"

namespace pawprint {

/// Controls a synthetic identity population.
///
/// Every identity gets a latent unit direction. Image embeddings are that
/// direction mapped into image space plus per-component gaussian noise of
/// std `sigma`; text tokens mix the mapped direction (weight `rho`) with an
/// uninformative gaussian (weight 1 - rho) and the same `sigma` noise. All
/// emitted vectors are unit-normalized.
struct SynthConfig {
  std::uint64_t seed = 0;
  int n_identities = 20;
  int images_per_identity = 4;
  int dim_image = 64;
  int dim_text = 32;
  double sigma = 0.05;
  double rho = 0.9;
  int tokens_per_text = 4;

  /// Throws InvalidConfig.
  void validate() const;
};

struct SyntheticPopulation {
  std::vector<EmbeddingRecord> images;
  /// One TextTokenSeq record per image, sharing its image_id.
  std::vector<EmbeddingRecord> texts;
};

/// Identity ids are "id0000", "id0001", ...; image ids are "id0000_img000", ...
SyntheticPopulation gen_population(const SynthConfig& cfg);

std::string synth_config_to_json(const SynthConfig& cfg);

}  // namespace pawprint
