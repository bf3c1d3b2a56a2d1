#include "cfair/cftrain.hpp"

#include <algorithm>
#include <cmath>

#include "cfair/rng.hpp"

namespace cfair {

WeightTable compute_weights(const EmbeddingDataset& ds, const CentroidSet& cs) {
  const std::size_t attributes = ds.attribute_count();
  const GroupIndex gi = build_group_index(ds);

  std::vector<PseudoCurves> curves;
  curves.reserve(attributes);
  for (std::uint32_t a = 0; a < attributes; ++a) {
    curves.push_back(pseudo_metric_curves(ds, cs, gi, a));
  }

  // Same (image, identity) enumeration order as build_target_table. The
  // weight 1/(|pairs_a| * level) reduces to the reciprocal of the integer
  // rank count, computed as such so the per-group maximum is exactly 1.
  WeightTable table;
  for (std::uint32_t i = 0; i < ds.n; ++i) {
    const std::uint32_t a = ds.attribute_of_image(i);
    const PseudoCurves& own = curves[a];
    for (const std::uint32_t id : gi.identities_of[a]) {
      const double s = pseudo_score(ds, cs, i, id);
      double w = 0.0;
      if (id == ds.identity_of[i]) {
        w = 1.0 / static_cast<double>(own.frr.count_leq(s));
        table.z_frr += w;
      } else {
        w = 1.0 / static_cast<double>(own.far.count_geq(s));
        table.z_far += w;
      }
      table.weights.push_back(w);
    }
  }
  return table;
}

WeightTable weights_from_table(const TargetTable& targets, const EmbeddingDataset& ds) {
  WeightTable table;
  table.weights.reserve(targets.size());
  for (const TargetEntry& e : targets.entries) {
    if (e.identity >= ds.k)
      throw ValidationError("weights_from_table: identity id out of range");
    const std::uint32_t a = ds.attribute_of_identity[e.identity];
    const double pairs = e.kind == ScoreKind::genuine
                             ? static_cast<double>(targets.genuine_count[a])
                             : static_cast<double>(targets.impostor_count[a]);
    const auto rank = static_cast<double>(std::llround(e.level * pairs));
    if (rank < 1.0)
      throw ValidationError("weights_from_table: degenerate level in table");
    const double w = 1.0 / rank;
    table.weights.push_back(w);
    (e.kind == ScoreKind::genuine ? table.z_frr : table.z_far) += w;
  }
  return table;
}

BatchResult batch_loss_grad(const ModuleParams& p, std::span<const std::uint32_t> batch,
                            const TargetTable& targets, const WeightTable& weights,
                            const EmbeddingDataset& ds) {
  if (batch.empty()) throw ValidationError("batch_loss_grad: empty batch");
  if (weights.weights.size() != targets.size())
    throw ValidationError("batch_loss_grad: weight table does not match target table");
  if (weights.z_far <= 0.0 || weights.z_frr <= 0.0)
    throw ValidationError("batch_loss_grad: non-positive weight normalizer");

  BatchResult result;
  result.grads = ModuleGrads::zeros(p.d, p.k);

  const std::size_t d = p.d;
  ForwardTrace trace;
  std::vector<double> output_grad(d);

  for (const std::uint32_t i : batch) {
    if (i >= ds.n) throw ValidationError("batch_loss_grad: image index out of range");
    forward_into(p, ds.embedding(i), trace);
    const std::span<const double> u{trace.output.data(), d};
    const double uu = squared_norm(u);
    if (uu == 0.0) throw NumericError("batch_loss_grad: module output is the zero vector");

    std::fill(output_grad.begin(), output_grad.end(), 0.0);
    // Per-pair cotangents w.r.t. the module output are summed first; the
    // backprop through the MLP is linear in them once the trace is fixed.
    for (std::size_t e = targets.image_offsets[i]; e < targets.image_offsets[i + 1]; ++e) {
      const TargetEntry& entry = targets.entries[e];
      const std::span<const double> v = p.centroid(entry.identity);
      const double vv = squared_norm(v);
      if (vv == 0.0) throw NumericError("batch_loss_grad: centroid is the zero vector");
      // Same expression as cosine_score, so at init the score reproduces the
      // table's source bit-exactly and the fixpoint gradient is exactly zero.
      const double denom = std::sqrt(uu * vv);
      const double score = std::clamp(dot(u, v) / denom, -1.0, 1.0);
      const double inv_uv = 1.0 / denom;

      const double z = entry.kind == ScoreKind::genuine ? weights.z_frr : weights.z_far;
      const double w = weights.weights[e];
      const double diff = score - entry.target;
      result.loss += w * diff * diff / z;

      const double residual = 2.0 * w * diff / z;
      double* mu_grad = result.grads.centroids.data() + entry.identity * d;
      for (std::size_t j = 0; j < d; ++j) {
        output_grad[j] += residual * (v[j] * inv_uv - score * u[j] / uu);
        mu_grad[j] += residual * (u[j] * inv_uv - score * v[j] / vv);
      }
    }
    backprop_output_grad(p, trace, output_grad, result.grads);
  }
  return result;
}

std::vector<std::uint32_t> sample_epoch(const GroupIndex& gi, std::uint64_t seed,
                                        std::uint64_t epoch_index) {
  const std::size_t attributes = gi.attribute_count();
  std::size_t total = 0;
  for (const auto& images : gi.images_of) {
    if (images.empty())
      throw ValidationError("sample_epoch: a group has no images");
    total += images.size();
  }

  // P(image) = 1/(A * |images(a)|): pick a group uniformly, then an image
  // uniformly inside it. This is exactly inverse-group-size sampling.
  CounterRng rng(seed, epoch_index);
  std::vector<std::uint32_t> order(total);
  for (std::size_t n = 0; n < total; ++n) {
    const auto& images = gi.images_of[rng.uniform_index(attributes)];
    order[n] = images[rng.uniform_index(images.size())];
  }
  return order;
}

TrainResult train(const EmbeddingDataset& ds, const CentroidSet& cs,
                  const TargetTable& targets, const WeightTable& weights,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (cfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (targets.reference_attribute != cfg.reference_attribute)
    throw ValidationError("train: target table was built for attribute " +
                          std::to_string(targets.reference_attribute) +
                          ", config says " + std::to_string(cfg.reference_attribute));
  if (targets.image_offsets.size() != ds.n + 1)
    throw ValidationError("train: target table does not cover the dataset");

  const GroupIndex gi = build_group_index(ds);

  TrainResult result;
  result.params = init_from_pretrained(cs);
  AdamState adam = AdamState::for_params(result.params);

  const std::size_t steps_per_epoch = (ds.n + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::uint32_t> order = sample_epoch(gi, cfg.seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t begin = step * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const BatchResult batch = batch_loss_grad(
          result.params, std::span<const std::uint32_t>{order.data() + begin, end - begin},
          targets, weights, ds);
      if (!std::isfinite(batch.loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step));
      adam_step(result.params, adam, batch.grads, cfg.learning_rate);
      epoch_loss += batch.loss;
    }
    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    if (on_epoch) on_epoch(epoch, result.epoch_mean_loss.back(), result.params);
  }
  return result;
}

}  // namespace cfair
