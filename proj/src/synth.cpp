#include "cfair/synth.hpp"

#include <cmath>

#include "cfair/rng.hpp"

namespace cfair {

namespace {

void validate_config(const SynthConfig& cfg) {
  if (cfg.d == 0) throw ValidationError("synth: dimension must be positive");
  if (cfg.groups.empty()) throw ValidationError("synth: at least one group required");
  for (const SynthGroup& g : cfg.groups) {
    if (g.name.empty()) throw ValidationError("synth: group name must not be empty");
    if (g.identities < 2)
      throw ValidationError("synth: group '" + g.name +
                            "' needs at least 2 identities so impostor pairs exist");
    if (g.images_per_identity < 1)
      throw ValidationError("synth: group '" + g.name + "' needs at least 1 image per identity");
    if (!(g.noise_sigma >= 0.0) || !std::isfinite(g.noise_sigma))
      throw ValidationError("synth: group '" + g.name + "' has invalid noise sigma");
  }
}

void gaussian_vector(CounterRng& rng, std::size_t d, std::vector<double>& out) {
  out.resize(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = rng.next_gaussian();
}

void normalize_in_place(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) throw NumericError("synth: drew a zero vector, change the seed");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

}  // namespace

EmbeddingDataset generate(const SynthConfig& cfg) {
  validate_config(cfg);

  EmbeddingDataset ds;
  ds.d = cfg.d;
  for (const SynthGroup& g : cfg.groups) {
    ds.attribute_names.push_back(g.name);
    ds.k += g.identities;
    ds.n += g.identities * g.images_per_identity;
  }
  ds.embeddings.reserve(ds.n * ds.d);
  ds.identity_of.reserve(ds.n);
  ds.attribute_of_identity.reserve(ds.k);

  CounterRng rng(cfg.seed);
  std::vector<double> direction, noise, image;
  std::uint32_t identity = 0;
  for (std::uint32_t a = 0; a < cfg.groups.size(); ++a) {
    const SynthGroup& g = cfg.groups[a];
    for (std::size_t id = 0; id < g.identities; ++id, ++identity) {
      ds.attribute_of_identity.push_back(a);
      gaussian_vector(rng, cfg.d, direction);
      normalize_in_place(direction);
      for (std::size_t img = 0; img < g.images_per_identity; ++img) {
        gaussian_vector(rng, cfg.d, noise);
        image.resize(cfg.d);
        for (std::size_t j = 0; j < cfg.d; ++j) {
          image[j] = direction[j] + g.noise_sigma * noise[j];
        }
        normalize_in_place(image);
        ds.identity_of.push_back(identity);
        for (double v : image) {
          // Round through f32 so in-memory values equal the on-disk precision.
          ds.embeddings.push_back(static_cast<double>(static_cast<float>(v)));
        }
      }
    }
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace cfair
