#include "cfair/transform.hpp"

#include <algorithm>
#include <cstring>

#include "io_util.hpp"

namespace cfair {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Maps an observed score with inclusive rank `count` out of m_a onto the
/// reference score at the same cdf level. The rank arithmetic is integral
/// (smallest j with j/m_r >= count/m_a, i.e. j = ceil(count * m_r / m_a)),
/// so a == r round-trips bit-exactly and no level ever degenerates.
double quantile_match(std::size_t count, std::size_t m_a, const StepCurve& curve_r) {
  if (count == 0)
    throw ValidationError("transform: score below every observed score of its group");
  const std::uint64_t m_r = curve_r.size();
  const std::uint64_t j =
      (static_cast<std::uint64_t>(count) * m_r + m_a - 1) / m_a;
  return curve_r.scores()[j - 1];
}

}  // namespace

double t_frr(double s, const StepCurve& genuine_a, const StepCurve& genuine_r) {
  if (genuine_a.orientation() != CurveOrientation::frr_type ||
      genuine_r.orientation() != CurveOrientation::frr_type)
    throw ValidationError("t_frr: curves must be FRR-type");
  return quantile_match(genuine_a.count_leq(s), genuine_a.size(), genuine_r);
}

double t_far(double s, const StepCurve& impostor_a, const StepCurve& impostor_r) {
  if (impostor_a.orientation() != CurveOrientation::far_type ||
      impostor_r.orientation() != CurveOrientation::far_type)
    throw ValidationError("t_far: curves must be FAR-type");
  return quantile_match(impostor_a.count_leq(s), impostor_a.size(), impostor_r);
}

std::vector<double> transform_population(const StepCurve& curve_a,
                                         const StepCurve& curve_r) {
  std::vector<double> transformed;
  transformed.reserve(curve_a.size());
  for (std::size_t rank = 1; rank <= curve_a.size(); ++rank) {
    transformed.push_back(quantile_match(rank, curve_a.size(), curve_r));
  }
  return transformed;
}

TargetTable build_target_table(const EmbeddingDataset& ds, const CentroidSet& cs,
                               std::uint32_t reference_attribute) {
  const std::size_t attributes = ds.attribute_count();
  if (reference_attribute >= attributes)
    throw ValidationError("build_target_table: reference attribute out of range");
  const GroupIndex gi = build_group_index(ds);

  std::vector<PseudoCurves> curves;
  curves.reserve(attributes);
  for (std::uint32_t a = 0; a < attributes; ++a) {
    curves.push_back(pseudo_metric_curves(ds, cs, gi, a));
  }
  const PseudoCurves& ref = curves[reference_attribute];

  TargetTable table;
  table.reference_attribute = reference_attribute;
  table.genuine_count.assign(attributes, 0);
  table.impostor_count.assign(attributes, 0);
  for (std::uint32_t a = 0; a < attributes; ++a) {
    table.genuine_count[a] = curves[a].frr.size();
    table.impostor_count[a] = curves[a].far.size();
  }

  table.image_offsets.assign(ds.n + 1, 0);
  for (std::uint32_t i = 0; i < ds.n; ++i) {
    table.image_offsets[i] = table.entries.size();
    const std::uint32_t a = ds.attribute_of_image(i);
    const PseudoCurves& own = curves[a];
    for (const std::uint32_t id : gi.identities_of[a]) {
      TargetEntry entry;
      entry.image = i;
      entry.identity = id;
      entry.source = pseudo_score(ds, cs, i, id);
      if (id == ds.identity_of[i]) {
        entry.kind = ScoreKind::genuine;
        const std::size_t rank = own.frr.count_leq(entry.source);
        entry.level = static_cast<double>(rank) / static_cast<double>(own.frr.size());
        entry.target = quantile_match(rank, own.frr.size(), ref.frr);
      } else {
        entry.kind = ScoreKind::impostor;
        // Inclusive FAR level (#{scores >= s} / m): positive even at the
        // maximum score, which keeps the derived loss weights finite.
        entry.level = static_cast<double>(own.far.count_geq(entry.source)) /
                      static_cast<double>(own.far.size());
        entry.target = quantile_match(own.far.count_leq(entry.source), own.far.size(),
                                      ref.far);
      }
      table.entries.push_back(entry);
    }
  }
  table.image_offsets[ds.n] = table.entries.size();
  return table;
}

double check_alignment(const std::vector<double>& transformed_scores,
                       const StepCurve& curve_r, CurveOrientation kind) {
  const StepCurve curve_a(
      ScoreSet::make(transformed_scores,
                     kind == CurveOrientation::frr_type ? ScoreKind::genuine
                                                        : ScoreKind::impostor),
      kind);
  // Both step functions are right-continuous and constant between jumps, so
  // the sup over (-1, 1) is attained on the union of their jump points.
  double sup_gap = 0.0;
  for (const auto* scores : {&curve_a.scores(), &curve_r.scores()}) {
    for (const double t : *scores) {
      sup_gap = std::max(sup_gap, std::abs(curve_a.eval(t) - curve_r.eval(t)));
    }
  }
  return sup_gap;
}

namespace {

#pragma pack(push, 1)
struct TargetRecord {
  std::uint32_t image;
  std::uint32_t identity;
  std::uint8_t kind;
  double source;
  double target;
  double level;
};
#pragma pack(pop)
static_assert(sizeof(TargetRecord) == 33, "target record layout is part of the format");

}  // namespace

void save_target_table(const TargetTable& table, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<TargetRecord> records(table.entries.size());
  for (std::size_t i = 0; i < table.entries.size(); ++i) {
    const TargetEntry& e = table.entries[i];
    records[i] = {e.image, e.identity, static_cast<std::uint8_t>(e.kind),
                  e.source, e.target, e.level};
  }
  io::write_bytes_atomic(dir / "targets.bin", records.data(),
                         records.size() * sizeof(TargetRecord));

  json header;
  header["reference_attribute"] = table.reference_attribute;
  header["entries"] = table.entries.size();
  header["genuine_count"] = table.genuine_count;
  header["impostor_count"] = table.impostor_count;
  io::write_json_atomic(dir / "targets.json", header);
}

TargetTable load_target_table(const fs::path& dir) {
  const json header = io::read_json(dir / "targets.json");
  TargetTable table;
  table.reference_attribute = header.at("reference_attribute").get<std::uint32_t>();
  table.genuine_count = header.at("genuine_count").get<std::vector<std::uint64_t>>();
  table.impostor_count = header.at("impostor_count").get<std::vector<std::uint64_t>>();
  const auto count = header.at("entries").get<std::size_t>();

  const std::vector<char> bytes = io::read_bytes(dir / "targets.bin");
  if (bytes.size() != count * sizeof(TargetRecord))
    throw ValidationError("targets.bin: size does not match header entry count");
  table.entries.resize(count);
  std::uint32_t max_image = 0;
  for (std::size_t i = 0; i < count; ++i) {
    TargetRecord record;
    std::memcpy(&record, bytes.data() + i * sizeof(TargetRecord), sizeof(TargetRecord));
    if (record.kind > 1)
      throw ValidationError("targets.bin: bad kind tag at record " + std::to_string(i));
    if (i > 0 && record.image < table.entries[i - 1].image)
      throw ValidationError("targets.bin: records not ordered by image");
    table.entries[i] = {record.image, record.identity,
                        static_cast<ScoreKind>(record.kind), record.source,
                        record.target, record.level};
    max_image = std::max(max_image, record.image);
  }
  if (count == 0) throw ValidationError("targets.bin: empty table");

  std::vector<std::size_t> per_image(static_cast<std::size_t>(max_image) + 1, 0);
  for (const TargetEntry& e : table.entries) ++per_image[e.image];
  table.image_offsets.assign(per_image.size() + 1, 0);
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    table.image_offsets[i + 1] = table.image_offsets[i] + per_image[i];
  }
  return table;
}

}  // namespace cfair
