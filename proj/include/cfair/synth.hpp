#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfair/dataset.hpp"

namespace cfair {

struct SynthGroup {
  std::string name;
  std::size_t identities = 0;        // >= 2 so impostor pairs exist
  std::size_t images_per_identity = 0;
  double noise_sigma = 0.0;          // intra-identity spread; larger = worse curves
};

struct SynthConfig {
  std::size_t d = 0;
  std::vector<SynthGroup> groups;
  std::uint64_t seed = 0;
};

/// Deterministic biased-dataset generator: each identity gets a uniform
/// direction on the unit sphere (normalized Gaussian draw), each image is
/// normalize(direction + sigma * gaussian). Group bias comes from sigma: a
/// noisier group has broader intra-identity spread and therefore worse
/// curves. Values are rounded through f32 so the dataset matches its on-disk
/// precision exactly. Identical configs yield bit-identical datasets.
EmbeddingDataset generate(const SynthConfig& cfg);

}  // namespace cfair
