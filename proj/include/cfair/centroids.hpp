#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cfair/curves.hpp"
#include "cfair/dataset.hpp"

namespace cfair {

/// Per-identity prototypes: the mean of each identity's normalized embeddings.
/// Rows are kept unnormalized (0 < norm <= 1); cosine renormalizes anyway.
struct CentroidSet {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> centroids;            // k x d, row-major
  std::vector<std::uint32_t> attribute_of;  // per centroid
  std::vector<std::uint32_t> image_count;   // n_k

  std::span<const double> centroid(std::size_t identity) const {
    return {centroids.data() + identity * d, d};
  }
};

/// mu_k = (1/n_k) * sum over images of identity k of f(x_i)/|f(x_i)|.
/// Throws NumericError if an identity's normalized embeddings cancel to zero.
CentroidSet estimate_centroids(const EmbeddingDataset& ds);

/// Cosine between an image embedding and a centroid.
double pseudo_score(const EmbeddingDataset& ds, const CentroidSet& cs,
                    std::size_t image, std::size_t identity);

struct PseudoCurves {
  StepCurve frr;  // over genuine image-centroid pairs of the group
  StepCurve far;  // over impostor image-centroid pairs of the group
};

/// Group-wise pseudo-metric curves over same-attribute image-centroid pairs:
/// the genuine side pairs each image with its own centroid, the impostor side
/// with every other centroid of the group. Pairs are iterated implicitly from
/// the group index, never materialized. Throws ValidationError when the group
/// has fewer than two identities (no impostor pairs exist).
PseudoCurves pseudo_metric_curves(const EmbeddingDataset& ds, const CentroidSet& cs,
                                  const GroupIndex& gi, std::uint32_t attribute);

PseudoCurves pseudo_metric_curves(const EmbeddingDataset& ds, const CentroidSet& cs,
                                  std::uint32_t attribute);

/// centroids.bin (f64 little-endian) + centroids.json, same container
/// convention as the dataset directory.
void save_centroids(const CentroidSet& cs, const std::filesystem::path& dir);
CentroidSet load_centroids(const std::filesystem::path& dir);

}  // namespace cfair
