#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cfair/fairmodule.hpp"
#include "cfair/transform.hpp"

namespace cfair {

/// Per-pair loss weights, aligned index-for-index with TargetTable entries,
/// plus the two global normalizers. A pair's weight is the reciprocal of its
/// inclusive in-group rank count (w = 1/#{scores on the pair's side of s}),
/// which equals 1/(|pairs_a| * level_a[s]) exactly and makes the maximal
/// weight within every group exactly 1.
struct WeightTable {
  std::vector<double> weights;
  double z_far = 0.0;  // sum of impostor weights over all pairs
  double z_frr = 0.0;  // sum of genuine weights over all pairs
};

WeightTable compute_weights(const EmbeddingDataset& ds, const CentroidSet& cs);

/// Weights recomputed from a persisted table's levels and group counts;
/// identical to compute_weights on the table's source data.
WeightTable weights_from_table(const TargetTable& table, const EmbeddingDataset& ds);

struct TrainConfig {
  std::size_t batch_size = 4096;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::uint32_t reference_attribute = 0;
  std::uint64_t seed = 0;
};

struct BatchResult {
  double loss = 0.0;
  ModuleGrads grads;
};

/// Loss and gradients of the weighted regression objective restricted to the
/// sampled images: for each image, every same-attribute centroid contributes
/// w * (module_score - target)^2 / Z_kind (cross-attribute pairs carry zero
/// weight and are skipped). Gradients flow through the module and centroids;
/// targets are constants. Accumulation order is fixed for bit-reproducibility.
BatchResult batch_loss_grad(const ModuleParams& p, std::span<const std::uint32_t> batch,
                            const TargetTable& targets, const WeightTable& weights,
                            const EmbeddingDataset& ds);

/// N weighted draws with replacement; an image's probability is inversely
/// proportional to its group's image count, so each group carries equal mass.
/// Deterministic given (seed, epoch_index).
std::vector<std::uint32_t> sample_epoch(const GroupIndex& gi, std::uint64_t seed,
                                        std::uint64_t epoch_index);

struct TrainResult {
  ModuleParams params;
  std::vector<double> epoch_mean_loss;
};

/// Called after each epoch with (epoch index, mean batch loss, params).
using EpochCallback =
    std::function<void(std::size_t, double, const ModuleParams&)>;

/// Full training loop: init from the pre-trained centroids, then
/// epochs x ceil(N/batch) Adam steps over group-balanced batches.
/// Deterministic given cfg.seed. A non-finite loss aborts with the failing
/// (epoch, step) in the diagnostic.
TrainResult train(const EmbeddingDataset& ds, const CentroidSet& cs,
                  const TargetTable& targets, const WeightTable& weights,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace cfair
