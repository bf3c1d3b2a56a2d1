#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfair/common.hpp"

namespace cfair {

/// A set of precomputed embeddings with identity labels and one sensitive
/// attribute per identity. This is the toolkit's sole input; images are never
/// touched. Embeddings are 32-bit on disk and widened to double in memory.
struct EmbeddingDataset {
  std::size_t n = 0;  // images
  std::size_t d = 0;  // embedding dimension
  std::size_t k = 0;  // identities

  std::vector<double> embeddings;                   // n x d, row-major
  std::vector<std::uint32_t> identity_of;           // per image, in [0, k)
  std::vector<std::uint32_t> attribute_of_identity; // per identity, in [0, a)
  std::vector<std::string> attribute_names;

  std::size_t attribute_count() const { return attribute_names.size(); }

  std::span<const double> embedding(std::size_t image) const {
    return {embeddings.data() + image * d, d};
  }

  std::uint32_t attribute_of_image(std::size_t image) const {
    return attribute_of_identity[identity_of[image]];
  }
};

/// Images and identities bucketed by attribute, plus per-identity image counts.
/// Buckets partition the dataset: every image and identity appears exactly once.
struct GroupIndex {
  std::vector<std::vector<std::uint32_t>> identities_of;  // [attribute] -> identity ids
  std::vector<std::vector<std::uint32_t>> images_of;      // [attribute] -> image indices
  std::vector<std::uint32_t> images_per_identity;         // n_k

  std::size_t attribute_count() const { return identities_of.size(); }
};

/// Checks every dataset invariant; throws ValidationError naming the offending
/// row or field.
void validate_dataset(const EmbeddingDataset& ds);

/// Loads a dataset directory: `embeddings.bin` + `manifest.json`, or the
/// `embeddings.csv` fallback (columns: identity_name, attribute_name, d values).
EmbeddingDataset load_dataset(const std::filesystem::path& dir);

/// Writes the binary layout (f32 little-endian matrix + JSON manifest with a
/// CRC32 checksum). load_dataset(save_dataset(ds)) reproduces ds bit-exactly.
void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& dir);

GroupIndex build_group_index(const EmbeddingDataset& ds);

}  // namespace cfair
