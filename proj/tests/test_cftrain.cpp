#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "cfair/cftrain.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cfair;

TEST_CASE("weights: support, normalization and the level arithmetic") {
  const auto ds = testsupport::random_dataset(137, 2, 4, 3, 8);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);

  REQUIRE(weights.weights.size() == targets.size());

  double z_far = 0.0, z_frr = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const TargetEntry& e = targets.entries[i];
    CHECK(weights.weights[i] > 0.0);
    CHECK(weights.weights[i] <= 1.0);
    // w equals 1/(|pairs| * level) by construction of both tables.
    const std::uint32_t a = ds.attribute_of_identity[e.identity];
    const double pairs = e.kind == ScoreKind::genuine
                             ? static_cast<double>(targets.genuine_count[a])
                             : static_cast<double>(targets.impostor_count[a]);
    CHECK(weights.weights[i] == doctest::Approx(1.0 / (pairs * e.level)).epsilon(1e-12));
    (e.kind == ScoreKind::genuine ? z_frr : z_far) += weights.weights[i];
  }
  CHECK(weights.z_far == doctest::Approx(z_far).epsilon(1e-12));
  CHECK(weights.z_frr == doctest::Approx(z_frr).epsilon(1e-12));

  // Normalized weights sum to 1 per kind.
  CHECK(z_far / weights.z_far == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(z_frr / weights.z_frr == doctest::Approx(1.0).epsilon(1e-12));

  // Only same-attribute pairs carry entries at all: the support of the
  // indicator structure is the table itself.
  for (const TargetEntry& e : targets.entries) {
    CHECK(ds.attribute_of_image(e.image) == ds.attribute_of_identity[e.identity]);
    CHECK((e.kind == ScoreKind::genuine) == (ds.identity_of[e.image] == e.identity));
  }
}

TEST_CASE("weights: the maximal per-group weight is exactly 1 for every group") {
  const auto ds = testsupport::random_dataset(139, 3, 5, 4, 8);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);

  std::map<std::pair<std::uint32_t, ScoreKind>, double> group_max;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const TargetEntry& e = targets.entries[i];
    const std::uint32_t a = ds.attribute_of_identity[e.identity];
    auto& best = group_max[{a, e.kind}];
    best = std::max(best, weights.weights[i]);
  }
  REQUIRE(group_max.size() == 2 * ds.attribute_count());
  for (const auto& [key, best] : group_max) {
    CHECK(best == 1.0);
  }
}

TEST_CASE("weights: plugged-in example w = 1/(4 * 0.5) = 0.5") {
  // 2 identities x 2 images in one group: 4 impostor pairs. The second-highest
  // impostor score has inclusive count 2, so its weight must be exactly 0.5.
  const auto ds = testsupport::random_dataset(149, 1, 2, 2, 6);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);
  REQUIRE(targets.impostor_count[0] == 4);

  bool found = false;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets.entries[i].kind == ScoreKind::impostor &&
        targets.entries[i].level == 0.5) {
      CHECK(weights.weights[i] == 0.5);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("weights_from_table reproduces compute_weights bit-exactly") {
  const auto ds = testsupport::random_dataset(151, 2, 4, 3, 8);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 1);
  const WeightTable direct = compute_weights(ds, cs);
  const WeightTable derived = weights_from_table(targets, ds);
  CHECK(derived.weights == direct.weights);
  CHECK(derived.z_far == direct.z_far);
  CHECK(derived.z_frr == direct.z_frr);
}

TEST_CASE("batch loss: hand-crafted single pair contributes w*(s-T)^2/Z") {
  // One image (1, 0), its centroid at 60 degrees so the score is exactly 0.5,
  // target pinned at 0.7, w = Z = 1: the loss must be (0.5 - 0.7)^2.
  EmbeddingDataset ds =
      testsupport::make_dataset(2, {1.0, 0.0}, {0}, {0}, {"a"});
  ModuleParams p = ModuleParams::zeros(2, 1);
  p.centroids = {1.0, std::sqrt(3.0)};

  TargetTable targets;
  targets.reference_attribute = 0;
  targets.entries = {{0, 0, ScoreKind::genuine, 0.5, 0.7, 1.0}};
  targets.image_offsets = {0, 1};
  targets.genuine_count = {1};
  targets.impostor_count = {1};
  WeightTable weights;
  weights.weights = {1.0};
  weights.z_far = 1.0;
  weights.z_frr = 1.0;

  const std::vector<std::uint32_t> batch{0};
  const BatchResult result = batch_loss_grad(p, batch, targets, weights, ds);
  CHECK(result.loss == doctest::Approx(0.04).epsilon(1e-14));
}

TEST_CASE("batch loss at init: single group dataset is the zero-loss fixpoint") {
  const auto ds = testsupport::random_dataset(157, 1, 5, 3, 8);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);
  const ModuleParams p = init_from_pretrained(cs);

  std::vector<std::uint32_t> all(ds.n);
  for (std::uint32_t i = 0; i < ds.n; ++i) all[i] = i;
  const BatchResult result = batch_loss_grad(p, all, targets, weights, ds);
  CHECK(result.loss < 1e-20);
}

TEST_CASE("full-batch loss equals the brute-force double sum") {
  std::mt19937 rng(163);
  for (const std::uint64_t seed : {167ull, 173ull}) {
    const auto ds = testsupport::random_dataset(seed, 2, 4, 3, 8);
    const CentroidSet cs = estimate_centroids(ds);
    const TargetTable targets = build_target_table(ds, cs, 0);
    const WeightTable weights = compute_weights(ds, cs);

    // Random parameters so the loss is far from zero.
    ModuleParams p = init_from_pretrained(cs);
    std::normal_distribution<double> dist(0.0, 0.2);
    for (auto* block : {&p.w1, &p.b1, &p.w2, &p.b2}) {
      for (double& v : *block) v = dist(rng);
    }

    std::vector<std::uint32_t> all(ds.n);
    for (std::uint32_t i = 0; i < ds.n; ++i) all[i] = i;
    const BatchResult result = batch_loss_grad(p, all, targets, weights, ds);
    const double brute = oracle::naive_full_loss(ds, cs, p, 0);
    CHECK(result.loss == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("a repeated image in a batch counts twice") {
  const auto ds = testsupport::random_dataset(179, 1, 3, 2, 6);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);
  ModuleParams p = init_from_pretrained(cs);
  p.b2[0] = 0.3;  // move off the fixpoint

  const std::vector<std::uint32_t> once{2};
  const std::vector<std::uint32_t> twice{2, 2};
  const double loss_once = batch_loss_grad(p, once, targets, weights, ds).loss;
  const double loss_twice = batch_loss_grad(p, twice, targets, weights, ds).loss;
  CHECK(loss_twice == doctest::Approx(2.0 * loss_once).epsilon(1e-13));
}

TEST_CASE("gradient of the batch loss matches finite differences") {
  const auto ds = testsupport::random_dataset(181, 2, 3, 2, 4);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);

  std::mt19937 rng(191);
  std::normal_distribution<double> dist(0.0, 0.3);
  ModuleParams p = init_from_pretrained(cs);
  for (auto* block : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    for (double& v : *block) v = dist(rng);
  }

  std::vector<std::uint32_t> all(ds.n);
  for (std::uint32_t i = 0; i < ds.n; ++i) all[i] = i;
  const BatchResult result = batch_loss_grad(p, all, targets, weights, ds);

  const double h = 1e-6;
  auto loss_at = [&](const ModuleParams& q) {
    return batch_loss_grad(q, all, targets, weights, ds).loss;
  };
  for (auto block : {&ModuleParams::w1, &ModuleParams::b1, &ModuleParams::w2,
                     &ModuleParams::b2, &ModuleParams::centroids}) {
    const auto& analytic = result.grads.*block;
    double err_sq = 0.0, norm_sq = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      ModuleParams plus = p, minus = p;
      (plus.*block)[i] += h;
      (minus.*block)[i] -= h;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
      err_sq += (analytic[i] - fd) * (analytic[i] - fd);
      norm_sq += fd * fd;
    }
    CHECK(std::sqrt(err_sq) / std::max(std::sqrt(norm_sq), 1e-9) < 1e-5);
  }
}

TEST_CASE("sampler: equal group mass and inverse-size image probabilities") {
  // Groups of 100 and 300 images: each image should be drawn with probability
  // 1/200 resp. 1/600, so each group receives half the draws.
  cfair::SynthConfig cfg;
  cfg.d = 4;
  cfg.seed = 193;
  cfg.groups = {{"small", 10, 10, 0.3}, {"large", 10, 30, 0.3}};
  const EmbeddingDataset ds = generate(cfg);
  const GroupIndex gi = build_group_index(ds);
  REQUIRE(gi.images_of[0].size() == 100);
  REQUIRE(gi.images_of[1].size() == 300);

  std::size_t group0 = 0, total = 0;
  std::vector<std::size_t> image_hits(ds.n, 0);
  for (std::uint64_t epoch = 0; epoch < 50; ++epoch) {
    for (const std::uint32_t i : sample_epoch(gi, 7, epoch)) {
      group0 += (ds.attribute_of_image(i) == 0) ? 1 : 0;
      ++image_hits[i];
      ++total;
    }
  }
  const double group0_share = static_cast<double>(group0) / static_cast<double>(total);
  CHECK(group0_share == doctest::Approx(0.5).epsilon(0.02));
  const double hit0 = static_cast<double>(image_hits[0]) / static_cast<double>(total);
  CHECK(hit0 == doctest::Approx(1.0 / 200.0).epsilon(0.3));
}

TEST_CASE("sampler: single group draws uniformly and covers images") {
  const auto ds = testsupport::random_dataset(197, 1, 5, 4, 4);
  const GroupIndex gi = build_group_index(ds);
  std::vector<std::size_t> hits(ds.n, 0);
  for (std::uint64_t epoch = 0; epoch < 200; ++epoch) {
    for (const std::uint32_t i : sample_epoch(gi, 11, epoch)) ++hits[i];
  }
  for (const std::size_t h : hits) {
    CHECK(h > 0);
    CHECK(std::abs(static_cast<double>(h) / 200.0 - 1.0) < 0.35);
  }
}

TEST_CASE("sampler: deterministic per (seed, epoch), different across epochs") {
  const auto ds = testsupport::random_dataset(199, 2, 3, 3, 4);
  const GroupIndex gi = build_group_index(ds);
  CHECK(sample_epoch(gi, 23, 4) == sample_epoch(gi, 23, 4));
  CHECK(sample_epoch(gi, 23, 4) != sample_epoch(gi, 23, 5));
  CHECK(sample_epoch(gi, 23, 4) != sample_epoch(gi, 29, 4));
}

TEST_CASE("train: single-group dataset stays at the fixpoint") {
  const auto ds = testsupport::random_dataset(211, 1, 5, 3, 8);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 5;
  cfg.reference_attribute = 0;
  cfg.seed = 3;
  const TrainResult result = train(ds, cs, targets, weights, cfg);

  for (const double loss : result.epoch_mean_loss) CHECK(loss < 1e-12);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double before = pseudo_score(ds, cs, i, ds.identity_of[i]);
    const double after = module_pseudo_score(result.params, ds.embedding(i),
                                             ds.identity_of[i]);
    CHECK(std::abs(after - before) < 1e-6);
  }
}

TEST_CASE("train: rejects a config with zero epochs") {
  const auto ds = testsupport::random_dataset(223, 1, 3, 2, 4);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.reference_attribute = 0;
  CHECK_THROWS_AS(train(ds, cs, targets, weights, cfg), ValidationError);
}

TEST_CASE("train: reduces the loss on a biased two-group dataset") {
  cfair::SynthConfig synth_cfg;
  synth_cfg.d = 8;
  synth_cfg.seed = 227;
  synth_cfg.groups = {{"ref", 5, 4, 0.3}, {"noisy", 5, 4, 0.8}};
  const EmbeddingDataset ds = generate(synth_cfg);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 0);
  const WeightTable weights = compute_weights(ds, cs);

  std::vector<std::uint32_t> all(ds.n);
  for (std::uint32_t i = 0; i < ds.n; ++i) all[i] = i;
  const double initial =
      batch_loss_grad(init_from_pretrained(cs), all, targets, weights, ds).loss;
  CHECK(initial > 1e-6);

  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 10;
  cfg.reference_attribute = 0;
  cfg.seed = 5;
  const TrainResult result = train(ds, cs, targets, weights, cfg);
  const double final_loss =
      batch_loss_grad(result.params, all, targets, weights, ds).loss;
  CHECK(final_loss < initial);
}

TEST_CASE("train: bit-identical across runs with the same config") {
  const auto ds = testsupport::random_dataset(229, 2, 3, 3, 6);
  const CentroidSet cs = estimate_centroids(ds);
  const TargetTable targets = build_target_table(ds, cs, 1);
  const WeightTable weights = compute_weights(ds, cs);

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.reference_attribute = 1;
  cfg.seed = 41;
  const TrainResult a = train(ds, cs, targets, weights, cfg);
  const TrainResult b = train(ds, cs, targets, weights, cfg);
  CHECK(a.params.w1 == b.params.w1);
  CHECK(a.params.b1 == b.params.b1);
  CHECK(a.params.w2 == b.params.w2);
  CHECK(a.params.b2 == b.params.b2);
  CHECK(a.params.centroids == b.params.centroids);
  CHECK(a.epoch_mean_loss == b.epoch_mean_loss);
}
