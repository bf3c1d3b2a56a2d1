#include "cfair/centroids.hpp"

#include <cmath>
#include <cstring>

#include "io_util.hpp"

namespace cfair {

namespace fs = std::filesystem;
using nlohmann::json;

CentroidSet estimate_centroids(const EmbeddingDataset& ds) {
  CentroidSet cs;
  cs.k = ds.k;
  cs.d = ds.d;
  cs.centroids.assign(ds.k * ds.d, 0.0);
  cs.attribute_of = ds.attribute_of_identity;
  cs.image_count.assign(ds.k, 0);

  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto e = ds.embedding(i);
    const double inv = 1.0 / norm(e);
    double* row = cs.centroids.data() + ds.identity_of[i] * ds.d;
    for (std::size_t j = 0; j < ds.d; ++j) row[j] += e[j] * inv;
    ++cs.image_count[ds.identity_of[i]];
  }
  for (std::size_t id = 0; id < ds.k; ++id) {
    const double inv_count = 1.0 / static_cast<double>(cs.image_count[id]);
    double* row = cs.centroids.data() + id * ds.d;
    double sq = 0.0;
    for (std::size_t j = 0; j < ds.d; ++j) {
      row[j] *= inv_count;
      sq += row[j] * row[j];
    }
    if (sq == 0.0)
      throw NumericError("identity " + std::to_string(id) +
                         ": normalized embeddings sum to the zero vector");
  }
  return cs;
}

double pseudo_score(const EmbeddingDataset& ds, const CentroidSet& cs,
                    std::size_t image, std::size_t identity) {
  // Normalize the embedding first, with the same operation sequence the
  // fairness module applies on its input. Cosine is invariant to this, and it
  // makes a zero-initialized module reproduce these scores bit-exactly, so
  // the reference fixpoint has an exactly zero gradient.
  const auto e = ds.embedding(image);
  const double sq = squared_norm(e);
  if (sq == 0.0) throw NumericError("pseudo_score: zero embedding");
  const double inv = 1.0 / std::sqrt(sq);
  std::vector<double> unit(ds.d);
  for (std::size_t j = 0; j < ds.d; ++j) unit[j] = e[j] * inv;
  return cosine_score(unit, cs.centroid(identity));
}

PseudoCurves pseudo_metric_curves(const EmbeddingDataset& ds, const CentroidSet& cs,
                                  const GroupIndex& gi, std::uint32_t attribute) {
  if (attribute >= gi.attribute_count())
    throw ValidationError("pseudo_metric_curves: attribute id out of range");
  const auto& images = gi.images_of[attribute];
  const auto& identities = gi.identities_of[attribute];
  if (images.empty())
    throw ValidationError("pseudo_metric_curves: group " + std::to_string(attribute) +
                          " has no images");
  if (identities.size() < 2)
    throw ValidationError("pseudo_metric_curves: group " + std::to_string(attribute) +
                          " has fewer than 2 identities; impostor curve unavailable");

  std::vector<double> genuine, impostor;
  genuine.reserve(images.size());
  impostor.reserve(images.size() * (identities.size() - 1));
  for (const std::uint32_t i : images) {
    for (const std::uint32_t id : identities) {
      const double s = pseudo_score(ds, cs, i, id);
      if (id == ds.identity_of[i]) {
        genuine.push_back(s);
      } else {
        impostor.push_back(s);
      }
    }
  }
  return PseudoCurves{
      StepCurve(ScoreSet::make(std::move(genuine), ScoreKind::genuine, attribute),
                CurveOrientation::frr_type),
      StepCurve(ScoreSet::make(std::move(impostor), ScoreKind::impostor, attribute),
                CurveOrientation::far_type)};
}

PseudoCurves pseudo_metric_curves(const EmbeddingDataset& ds, const CentroidSet& cs,
                                  std::uint32_t attribute) {
  return pseudo_metric_curves(ds, cs, build_group_index(ds), attribute);
}

void save_centroids(const CentroidSet& cs, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_bytes_atomic(dir / "centroids.bin", cs.centroids.data(),
                         cs.centroids.size() * sizeof(double));
  json manifest;
  manifest["k"] = cs.k;
  manifest["d"] = cs.d;
  manifest["dtype"] = "f64";
  json rows = json::array();
  for (std::size_t id = 0; id < cs.k; ++id) {
    rows.push_back({{"identity", id},
                    {"attribute", cs.attribute_of[id]},
                    {"image_count", cs.image_count[id]}});
  }
  manifest["centroids"] = std::move(rows);
  manifest["checksum"] = crc32(cs.centroids.data(), cs.centroids.size() * sizeof(double));
  io::write_json_atomic(dir / "centroids.json", manifest);
}

CentroidSet load_centroids(const fs::path& dir) {
  const json manifest = io::read_json(dir / "centroids.json");
  CentroidSet cs;
  cs.k = manifest.at("k").get<std::size_t>();
  cs.d = manifest.at("d").get<std::size_t>();
  cs.attribute_of.assign(cs.k, 0);
  cs.image_count.assign(cs.k, 0);
  for (const json& row : manifest.at("centroids")) {
    const auto id = row.at("identity").get<std::size_t>();
    if (id >= cs.k) throw ValidationError("centroids.json: identity id out of range");
    cs.attribute_of[id] = row.at("attribute").get<std::uint32_t>();
    cs.image_count[id] = row.at("image_count").get<std::uint32_t>();
  }

  const std::vector<char> bytes = io::read_bytes(dir / "centroids.bin");
  if (bytes.size() != cs.k * cs.d * sizeof(double))
    throw ValidationError("centroids.bin: size does not match manifest shape");
  if (manifest.contains("checksum") &&
      manifest.at("checksum").get<std::uint32_t>() != crc32(bytes.data(), bytes.size()))
    throw ValidationError("centroids.bin: checksum mismatch");
  cs.centroids.resize(cs.k * cs.d);
  std::memcpy(cs.centroids.data(), bytes.data(), bytes.size());
  return cs;
}

}  // namespace cfair
